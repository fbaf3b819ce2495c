"""WAV decoding and dataset enumeration.

Only uncompressed RIFF/WAVE is handled: integer PCM at 8, 16, 24 or 32 bits
and IEEE float at 32 bits (64-bit float is accepted too). Integer samples are
scaled by ``2 ** (bits - 1)``, so full-scale negative maps to exactly -1.0 and
full-scale positive to ``1 - 2 ** (1 - bits)``.
"""

from __future__ import annotations

import csv
import io
import re
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np

from .errors import (
    ChannelOutOfRange,
    EmptyDataset,
    FormatError,
    MalformedWav,
    SampleRateMismatch,
    UnreadablePath,
    UnsupportedEncoding,
)

WAVE_FORMAT_PCM = 0x0001
WAVE_FORMAT_IEEE_FLOAT = 0x0003
WAVE_FORMAT_EXTENSIBLE = 0xFFFE

LABELS = ("normal", "anormal")
MANIFEST_HEADER = ("path", "label", "machine_type", "machine_id", "snr")


@dataclass(frozen=True)
class AudioClip:
    sample_rate: int
    channels: tuple[np.ndarray, ...]

    def __post_init__(self):
        if self.sample_rate <= 0:
            raise ValueError(f"sample_rate must be positive, got {self.sample_rate}")
        channels = tuple(np.array(ch, dtype=np.float64) for ch in self.channels)
        if not channels:
            raise ValueError("an AudioClip needs at least one channel")
        lengths = {len(ch) for ch in channels}
        if len(lengths) != 1:
            raise ValueError(f"channels have differing lengths: {sorted(lengths)}")
        for ch in channels:
            ch.setflags(write=False)
        object.__setattr__(self, "channels", channels)

    @property
    def samples_per_channel(self) -> int:
        return len(self.channels[0])

    @property
    def n_channels(self) -> int:
        return len(self.channels)

    @property
    def duration(self) -> float:
        return self.samples_per_channel / self.sample_rate


def _iter_chunks(data: bytes, start: int, end: int):
    pos = start
    while pos + 8 <= end:
        chunk_id, size = struct.unpack_from("<4sI", data, pos)
        body = pos + 8
        if body + size > len(data):
            raise MalformedWav(
                f"chunk {chunk_id!r} at offset {pos} claims {size} bytes, "
                f"only {len(data) - body} available"
            )
        yield chunk_id, body, size
        # chunks are word aligned
        pos = body + size + (size & 1)


def decode_wav(file_bytes: bytes) -> AudioClip:
    """Decode a RIFF/WAVE byte string into an :class:`AudioClip`."""
    data = bytes(file_bytes)
    if len(data) < 12:
        raise MalformedWav("file shorter than a RIFF header")
    riff, riff_size, wave = struct.unpack_from("<4sI4s", data, 0)
    if riff != b"RIFF":
        raise MalformedWav(f"bad RIFF magic {riff!r}")
    if wave != b"WAVE":
        raise MalformedWav(f"bad WAVE form type {wave!r}")
    # some writers leave riff_size stale; trust the shorter of the two
    end = min(len(data), 8 + riff_size)

    fmt = None
    payload = None
    for chunk_id, body, size in _iter_chunks(data, 12, end):
        if chunk_id == b"fmt ":
            fmt = _parse_fmt(data[body:body + size])
        elif chunk_id == b"data":
            payload = data[body:body + size]
    if fmt is None:
        raise MalformedWav("missing fmt chunk")
    if payload is None:
        raise MalformedWav("missing data chunk")

    tag, n_channels, sample_rate, block_align, bits = fmt
    if n_channels < 1:
        raise MalformedWav("fmt chunk declares zero channels")
    if sample_rate <= 0:
        raise MalformedWav("fmt chunk declares a non-positive sample rate")
    width = bits // 8
    if bits % 8 or block_align != width * n_channels:
        raise MalformedWav(
            f"inconsistent block alignment {block_align} for {n_channels}ch/{bits}bit"
        )
    n_frames = len(payload) // block_align
    payload = payload[:n_frames * block_align]

    if tag == WAVE_FORMAT_PCM:
        samples = _decode_pcm(payload, bits)
    elif tag == WAVE_FORMAT_IEEE_FLOAT:
        if bits not in (32, 64):
            raise UnsupportedEncoding(f"{bits}-bit float samples")
        samples = np.frombuffer(payload, dtype="<f4" if bits == 32 else "<f8")
        samples = samples.astype(np.float64)
    else:
        raise UnsupportedEncoding(f"format tag 0x{tag:04X} is not uncompressed PCM/float")

    frames = samples.reshape(n_frames, n_channels)
    channels = tuple(np.ascontiguousarray(frames[:, c]) for c in range(n_channels))
    return AudioClip(sample_rate=sample_rate, channels=channels)


def _parse_fmt(body: bytes):
    if len(body) < 16:
        raise MalformedWav("fmt chunk shorter than 16 bytes")
    tag, n_channels, sample_rate, _byte_rate, block_align, bits = struct.unpack_from(
        "<HHIIHH", body, 0
    )
    if tag == WAVE_FORMAT_EXTENSIBLE:
        if len(body) < 40:
            raise MalformedWav("extensible fmt chunk shorter than 40 bytes")
        # the sub-format GUID starts with the plain format tag
        tag = struct.unpack_from("<H", body, 24)[0]
    return tag, n_channels, sample_rate, block_align, bits


def _decode_pcm(payload: bytes, bits: int) -> np.ndarray:
    if bits == 8:
        raw = np.frombuffer(payload, dtype=np.uint8).astype(np.float64) - 128.0
    elif bits == 16:
        raw = np.frombuffer(payload, dtype="<i2").astype(np.float64)
    elif bits == 24:
        b = np.frombuffer(payload, dtype=np.uint8).reshape(-1, 3).astype(np.int32)
        ints = b[:, 0] | (b[:, 1] << 8) | (b[:, 2] << 16)
        ints = np.where(ints & 0x800000, ints - (1 << 24), ints)
        raw = ints.astype(np.float64)
    elif bits == 32:
        raw = np.frombuffer(payload, dtype="<i4").astype(np.float64)
    else:
        raise UnsupportedEncoding(f"{bits}-bit integer PCM")
    return raw / float(1 << (bits - 1))


def encode_wav(channels, sample_rate: int, bits: int = 16, float_format: bool = False) -> bytes:
    """Encode samples in [-1, 1] as a RIFF/WAVE byte string.

    ``channels`` is a 1-D array (mono) or a sequence of equal-length channel
    arrays. Integer encodings round to nearest and saturate at full scale.
    """
    arr = np.asarray(channels, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[None, :]
    n_channels = arr.shape[0]
    interleaved = arr.T.reshape(-1)

    if float_format:
        if bits != 32:
            raise UnsupportedEncoding("float encoding is written as 32-bit only")
        tag = WAVE_FORMAT_IEEE_FLOAT
        payload = interleaved.astype("<f4").tobytes()
    else:
        tag = WAVE_FORMAT_PCM
        scale = float(1 << (bits - 1))
        ints = np.clip(np.rint(interleaved * scale), -scale, scale - 1).astype(np.int64)
        if bits == 8:
            payload = (ints + 128).astype(np.uint8).tobytes()
        elif bits == 16:
            payload = ints.astype("<i2").tobytes()
        elif bits == 24:
            u = (ints & 0xFFFFFF).astype(np.uint32)
            payload = np.stack([u & 0xFF, (u >> 8) & 0xFF, (u >> 16) & 0xFF], axis=1)
            payload = payload.astype(np.uint8).tobytes()
        elif bits == 32:
            payload = ints.astype("<i4").tobytes()
        else:
            raise UnsupportedEncoding(f"{bits}-bit integer PCM")

    block_align = n_channels * bits // 8
    fmt = struct.pack(
        "<HHIIHH", tag, n_channels, sample_rate, sample_rate * block_align, block_align, bits
    )
    buf = io.BytesIO()
    pad = b"\x00" if len(payload) & 1 else b""
    buf.write(struct.pack("<4sI4s", b"RIFF", 4 + 8 + len(fmt) + 8 + len(payload) + len(pad), b"WAVE"))
    buf.write(struct.pack("<4sI", b"fmt ", len(fmt)) + fmt)
    buf.write(struct.pack("<4sI", b"data", len(payload)) + payload + pad)
    return buf.getvalue()


def read_wav(path, expected_rate: int | None = None) -> AudioClip:
    """Read and decode a WAV file, optionally insisting on a sample rate.

    No resampling ever happens; a mismatch raises :class:`SampleRateMismatch`.
    """
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise UnreadablePath(f"{path}: {exc.strerror or exc}") from exc
    try:
        clip = decode_wav(data)
    except MalformedWav as exc:
        raise MalformedWav(f"{path}: {exc}") from exc
    if expected_rate is not None and clip.sample_rate != expected_rate:
        raise SampleRateMismatch(
            f"{path}: sample rate {clip.sample_rate} Hz, expected {expected_rate} Hz"
        )
    return clip


def select_channel(clip: AudioClip, index: int) -> np.ndarray:
    if not 0 <= index < clip.n_channels:
        raise ChannelOutOfRange(
            f"channel {index} requested from a {clip.n_channels}-channel clip"
        )
    return clip.channels[index]


@dataclass(frozen=True)
class ManifestEntry:
    path: str
    label: str
    machine_type: str = ""
    machine_id: str = ""
    snr: str = ""

    def __post_init__(self):
        if self.label not in LABELS:
            raise ValueError(f"label must be one of {LABELS}, got {self.label!r}")

    @property
    def is_anormal(self) -> bool:
        return self.label == "anormal"


@dataclass(frozen=True)
class DatasetManifest:
    entries: tuple[ManifestEntry, ...] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple(self.entries))
        seen = set()
        for e in self.entries:
            if e.path in seen:
                raise ValueError(f"duplicate manifest path {e.path}")
            seen.add(e.path)

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    @property
    def normal(self) -> list[ManifestEntry]:
        return [e for e in self.entries if e.label == "normal"]

    @property
    def anormal(self) -> list[ManifestEntry]:
        return [e for e in self.entries if e.label == "anormal"]

    def by_path(self) -> dict[str, ManifestEntry]:
        return {e.path: e for e in self.entries}

    def groups(self) -> dict[tuple[str, str], "DatasetManifest"]:
        """Split into one manifest per (machine_type, machine_id)."""
        out: dict[tuple[str, str], list[ManifestEntry]] = {}
        for e in self.entries:
            out.setdefault((e.machine_type, e.machine_id), []).append(e)
        return {k: DatasetManifest(tuple(v)) for k, v in sorted(out.items())}


_SNR_RE = re.compile(r"^(-?\d+)_?db", re.IGNORECASE)


def scan_dataset(root_path, layout_rule: str = "mimii") -> DatasetManifest:
    """Enumerate a dataset into a manifest sorted by path.

    ``mimii`` walks ``.../<machine_type>/id_XX/{normal,abnormal}/*.wav`` below
    ``root_path``; the SNR tag is taken from any ancestor directory named like
    ``0_dB_fan`` or ``-6dB``. ``csv`` reads an explicit manifest file (or
    ``manifest.csv`` inside a directory); relative paths resolve against the
    file's directory and every listed file must exist.
    """
    root = Path(root_path)
    if layout_rule == "mimii":
        entries = _scan_mimii(root)
    elif layout_rule == "csv":
        entries = _read_csv_manifest(root)
    else:
        raise ValueError(f"unknown layout rule {layout_rule!r}")
    if not entries:
        raise EmptyDataset(f"no samples found under {root}")
    return DatasetManifest(tuple(sorted(entries, key=lambda e: e.path)))


def _scan_mimii(root: Path) -> list[ManifestEntry]:
    if not root.is_dir():
        raise UnreadablePath(f"{root}: not a readable directory")
    entries = []
    for wav in root.rglob("*.wav"):
        parts = wav.relative_to(root).parts
        label_dir = wav.parent.name
        id_dir = wav.parent.parent.name
        if label_dir not in ("normal", "abnormal") or not id_dir.startswith("id_"):
            continue
        machine_type = wav.parent.parent.parent.name
        snr = ""
        for part in reversed((root.name,) + parts[:-1]):
            m = _SNR_RE.match(part)
            if m:
                snr = m.group(1)
                break
        entries.append(ManifestEntry(
            path=str(wav),
            label="normal" if label_dir == "normal" else "anormal",
            machine_type=machine_type,
            machine_id=id_dir[3:],
            snr=snr,
        ))
    return entries


def _read_csv_manifest(path: Path) -> list[ManifestEntry]:
    if path.is_dir():
        path = path / "manifest.csv"
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise UnreadablePath(f"{path}: {exc.strerror or exc}") from exc
    reader = csv.DictReader(io.StringIO(text))
    # grouping columns may be omitted; path and label may not
    missing = {"path", "label"} - set(reader.fieldnames or ())
    if missing:
        raise FormatError(f"{path}: manifest header lacks {sorted(missing)}")
    base = path.parent
    entries = []
    for row in reader:
        p = Path(row["path"])
        if not p.is_absolute():
            p = base / p
        if not p.is_file():
            raise UnreadablePath(f"{p}: listed in {path} but not found")
        entries.append(ManifestEntry(
            path=str(p),
            label=row["label"],
            machine_type=row.get("machine_type") or "",
            machine_id=row.get("machine_id") or "",
            snr=row.get("snr") or "",
        ))
    return entries


def write_manifest(manifest: DatasetManifest | Iterable[ManifestEntry], path) -> None:
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(MANIFEST_HEADER)
        for e in manifest:
            w.writerow((e.path, e.label, e.machine_type, e.machine_id, e.snr))
