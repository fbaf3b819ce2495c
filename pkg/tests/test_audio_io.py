import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from qpool.audio_io import (
    AudioClip,
    DatasetManifest,
    ManifestEntry,
    decode_wav,
    encode_wav,
    read_wav,
    scan_dataset,
    select_channel,
    write_manifest,
)
from qpool.errors import (
    ChannelOutOfRange,
    EmptyDataset,
    MalformedWav,
    SampleRateMismatch,
    UnreadablePath,
    UnsupportedEncoding,
)


def _wav_with_fmt(fmt_body: bytes, payload: bytes) -> bytes:
    body = b"WAVE" + struct.pack("<4sI", b"fmt ", len(fmt_body)) + fmt_body
    body += struct.pack("<4sI", b"data", len(payload)) + payload
    return b"RIFF" + struct.pack("<I", len(body)) + body


def test_full_scale_16bit_sample():
    fmt = struct.pack("<HHIIHH", 1, 1, 16000, 32000, 2, 16)
    clip = decode_wav(_wav_with_fmt(fmt, struct.pack("<h", 0x7FFF)))
    assert clip.n_channels == 1
    assert clip.samples_per_channel == 1
    assert clip.channels[0][0] == 32767 / 32768


def test_negative_full_scale_is_minus_one():
    fmt = struct.pack("<HHIIHH", 1, 1, 16000, 32000, 2, 16)
    clip = decode_wav(_wav_with_fmt(fmt, struct.pack("<h", -32768)))
    assert clip.channels[0][0] == -1.0


def test_mimii_shaped_clip():
    channels = np.zeros((8, 160000))
    channels[3] = 0.25
    clip = decode_wav(encode_wav(channels, 16000, bits=16))
    assert clip.n_channels == 8
    assert clip.samples_per_channel == 160000
    assert clip.sample_rate == 16000
    assert clip.duration == 10.0
    assert np.all(clip.channels[3] == 0.25)


@pytest.mark.parametrize("bits", [8, 16, 24, 32])
def test_sine_roundtrip_within_one_lsb(bits):
    t = np.arange(1600) / 16000
    sine = 0.9 * np.sin(2 * np.pi * 1000 * t)
    clip = decode_wav(encode_wav(sine, 16000, bits=bits))
    lsb = 2.0 ** (1 - bits)
    assert np.max(np.abs(clip.channels[0] - sine)) <= lsb


def test_float32_roundtrip():
    x = np.linspace(-1, 1, 101)
    clip = decode_wav(encode_wav(x, 8000, bits=32, float_format=True))
    np.testing.assert_array_equal(clip.channels[0], x.astype(np.float32).astype(np.float64))


def test_extensible_format_is_read_via_subformat():
    # WAVE_FORMAT_EXTENSIBLE with the PCM sub-format GUID
    guid = struct.pack("<H", 1) + b"\x00\x00\x00\x00\x10\x00\x80\x00\x00\xaa\x00\x38\x9b\x71"
    fmt = struct.pack("<HHIIHH", 0xFFFE, 2, 16000, 64000, 4, 16)
    fmt += struct.pack("<HHI", 22, 16, 3) + guid
    payload = struct.pack("<hhhh", 100, -100, 200, -200)
    clip = decode_wav(_wav_with_fmt(fmt, payload))
    np.testing.assert_array_equal(clip.channels[0], [100 / 32768, 200 / 32768])
    np.testing.assert_array_equal(clip.channels[1], [-100 / 32768, -200 / 32768])


def test_extra_chunks_and_odd_padding_are_skipped():
    fmt = struct.pack("<HHIIHH", 1, 1, 8000, 8000, 1, 8)
    body = b"WAVE" + struct.pack("<4sI", b"LIST", 3) + b"abc\x00"
    body += struct.pack("<4sI", b"fmt ", len(fmt)) + fmt
    body += struct.pack("<4sI", b"data", 2) + bytes([128, 255])
    clip = decode_wav(b"RIFF" + struct.pack("<I", len(body)) + body)
    np.testing.assert_array_equal(clip.channels[0], [0.0, 127 / 128])


@pytest.mark.parametrize("data, match", [
    (b"RIFX" + b"\x00" * 40, "RIFF"),
    (b"RIFF\x04\x00\x00\x00AVI ", "WAVE"),
    (b"RIF", "shorter"),
])
def test_malformed_headers(data, match):
    with pytest.raises(MalformedWav, match=match):
        decode_wav(data)


def test_missing_data_chunk():
    fmt = struct.pack("<HHIIHH", 1, 1, 8000, 16000, 2, 16)
    body = b"WAVE" + struct.pack("<4sI", b"fmt ", len(fmt)) + fmt
    with pytest.raises(MalformedWav, match="data"):
        decode_wav(b"RIFF" + struct.pack("<I", len(body)) + body)


def test_chunk_overrunning_file():
    data = bytearray(encode_wav(np.zeros(10), 8000))
    with pytest.raises(MalformedWav):
        decode_wav(bytes(data[:-6]))


def test_compressed_format_rejected():
    fmt = struct.pack("<HHIIHH", 2, 1, 8000, 4000, 1, 8)  # MS ADPCM
    with pytest.raises(UnsupportedEncoding):
        decode_wav(_wav_with_fmt(fmt, b"\x00" * 4))


def test_read_wav_rejects_rate_mismatch(tmp_path):
    path = tmp_path / "a.wav"
    path.write_bytes(encode_wav(np.zeros(16), 44100))
    assert read_wav(path).sample_rate == 44100
    with pytest.raises(SampleRateMismatch):
        read_wav(path, expected_rate=16000)


def test_read_wav_missing_file(tmp_path):
    with pytest.raises(UnreadablePath):
        read_wav(tmp_path / "nope.wav")


@settings(max_examples=50, deadline=None)
@given(
    arrays(np.float64, st.tuples(st.integers(1, 4), st.integers(1, 300)),
           elements=st.floats(-1.0, 1.0, allow_nan=False)),
    st.sampled_from([8, 16, 24, 32]),
)
def test_encode_decode_within_one_lsb(channels, bits):
    clip = decode_wav(encode_wav(channels, 16000, bits=bits))
    got = np.stack(clip.channels)
    assert got.shape == channels.shape
    assert np.max(np.abs(got - channels)) <= 2.0 ** (1 - bits)
    assert np.all((got >= -1) & (got <= 1))


def test_select_channel():
    mono = AudioClip(16000, (np.arange(4.0),))
    np.testing.assert_array_equal(select_channel(mono, 0), np.arange(4.0))
    eight = AudioClip(16000, tuple(np.full(3, float(i)) for i in range(8)))
    np.testing.assert_array_equal(select_channel(eight, 7), np.full(3, 7.0))
    with pytest.raises(ChannelOutOfRange):
        select_channel(eight, 8)
    with pytest.raises(ChannelOutOfRange):
        select_channel(eight, -1)


@settings(max_examples=30, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 8), st.integers(1, 50)),
              elements=st.floats(-1, 1)), st.data())
def test_select_channel_returns_stored_values(channels, data):
    clip = AudioClip(8000, tuple(channels))
    i = data.draw(st.integers(0, len(channels) - 1))
    np.testing.assert_array_equal(select_channel(clip, i), channels[i])


def test_audio_clip_invariants():
    with pytest.raises(ValueError):
        AudioClip(16000, (np.zeros(3), np.zeros(4)))
    with pytest.raises(ValueError):
        AudioClip(0, (np.zeros(3),))


def _mimii_tree(root, machine="fan", mid="00", n_normal=2, n_abnormal=1):
    base = root / "0_dB_fan" / machine / f"id_{mid}"
    for label, count in (("normal", n_normal), ("abnormal", n_abnormal)):
        (base / label).mkdir(parents=True)
        for i in range(count):
            (base / label / f"{i:08d}.wav").write_bytes(encode_wav(np.zeros(8), 16000))
    return root


def test_scan_mimii_small(tmp_path):
    manifest = scan_dataset(_mimii_tree(tmp_path), "mimii")
    assert len(manifest) == 3
    assert [e.label for e in manifest] == ["anormal", "normal", "normal"]
    e = manifest.entries[0]
    assert (e.machine_type, e.machine_id, e.snr) == ("fan", "00", "0")
    assert [e.path for e in manifest] == sorted(e.path for e in manifest)


def test_scan_mimii_fan0_counts(tmp_path):
    # 604 + 203 + 204 normal and 203 + 204 anormal recordings
    manifest = scan_dataset(_mimii_tree(tmp_path, n_normal=1011, n_abnormal=407), "mimii")
    assert len(manifest.normal) == 604 + 203 + 204
    assert len(manifest.anormal) == 203 + 204


def test_scan_is_deterministic(tmp_path):
    _mimii_tree(tmp_path, n_normal=5, n_abnormal=3)
    assert scan_dataset(tmp_path, "mimii") == scan_dataset(tmp_path, "mimii")


def test_scan_empty_and_missing(tmp_path):
    with pytest.raises(EmptyDataset):
        scan_dataset(tmp_path, "mimii")
    with pytest.raises(UnreadablePath):
        scan_dataset(tmp_path / "missing", "mimii")


def test_csv_manifest_roundtrip(tmp_path):
    for name in ("b.wav", "a.wav"):
        (tmp_path / name).write_bytes(encode_wav(np.zeros(4), 16000))
    entries = [ManifestEntry("b.wav", "anormal", "pump", "02", "6"),
               ManifestEntry("a.wav", "normal", "pump", "02", "6")]
    write_manifest(entries, tmp_path / "manifest.csv")
    manifest = scan_dataset(tmp_path, "csv")
    assert [e.path for e in manifest] == [str(tmp_path / "a.wav"), str(tmp_path / "b.wav")]
    assert manifest.entries[1].label == "anormal"


def test_csv_manifest_missing_file_is_named(tmp_path):
    (tmp_path / "m.csv").write_text(
        "path,label,machine_type,machine_id,snr\nghost.wav,normal,fan,00,0\n", encoding="utf-8"
    )
    with pytest.raises(UnreadablePath, match="ghost.wav"):
        scan_dataset(tmp_path / "m.csv", "csv")


def test_manifest_rejects_bad_labels_and_duplicates():
    with pytest.raises(ValueError):
        ManifestEntry("x", "abnormal")
    e = ManifestEntry("x", "normal")
    with pytest.raises(ValueError):
        DatasetManifest((e, e))
