"""Magnitude STFT and dB conversion.

Defaults reproduce the common audio-tooling conventions: periodic Hann window
of 2048 samples, hop of a quarter window, centred frames with zero padding,
and ``20 log10`` amplitude scaling with ``amin=1e-5`` and an 80 dB floor
below the maximum.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .containers import pack_spec1, unpack_spec1
from .errors import FormatError, SignalTooShort


@dataclass(frozen=True)
class StftConfig:
    n_fft: int = 2048
    hop_length: int | None = None
    window: str = "hann"
    center: bool = True
    pad_mode: str = "constant"

    def __post_init__(self):
        if self.n_fft <= 0 or self.n_fft % 2:
            raise ValueError(f"n_fft must be positive and even, got {self.n_fft}")
        if self.hop_length is None:
            object.__setattr__(self, "hop_length", self.n_fft // 4)
        if not 0 < self.hop_length <= self.n_fft:
            raise ValueError(f"hop_length must lie in (0, n_fft], got {self.hop_length}")
        if self.window != "hann":
            raise ValueError(f"only the hann window is supported, got {self.window!r}")
        if self.pad_mode != "constant":
            raise ValueError(f"only constant (zero) padding is supported, got {self.pad_mode!r}")

    @property
    def n_bins(self) -> int:
        return self.n_fft // 2 + 1

    def n_frames(self, signal_length: int) -> int:
        if self.center:
            return 1 + signal_length // self.hop_length
        return 1 + (signal_length - self.n_fft) // self.hop_length


@dataclass(frozen=True)
class DbConfig:
    ref_value: float = 1.0
    amin: float = 1e-5
    top_db: float | None = 80.0

    def __post_init__(self):
        if not self.ref_value > 0:
            raise ValueError(f"ref_value must be positive, got {self.ref_value}")
        if not self.amin > 0:
            raise ValueError(f"amin must be positive, got {self.amin}")
        if self.top_db is not None and self.top_db < 0:
            raise ValueError(f"top_db must be non-negative, got {self.top_db}")


def config_fingerprint(stft_cfg: StftConfig, db_cfg: DbConfig) -> str:
    """Short stable hash identifying a preprocessing configuration."""
    blob = json.dumps({"stft": asdict(stft_cfg), "db": asdict(db_cfg)}, sort_keys=True)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]


@dataclass(frozen=True, eq=False)
class Spectrogram:
    """dB matrix with frequency bins as rows and time frames as columns."""

    values: np.ndarray
    source_id: str = ""
    fingerprint: str = ""

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64)
        if values.ndim != 2:
            raise ValueError(f"spectrogram values must be 2-D, got shape {values.shape}")
        if not np.isfinite(values).all():
            raise ValueError(f"spectrogram {self.source_id!r} has non-finite entries")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    @property
    def n(self) -> int:
        return self.values.size

    def to_bytes(self) -> bytes:
        meta = {"kind": "spectrogram", "source_id": self.source_id, "fingerprint": self.fingerprint}
        return pack_spec1(self.values, meta)

    @classmethod
    def from_bytes(cls, data: bytes, what: str = "SPEC1") -> "Spectrogram":
        values, meta = unpack_spec1(data, what)
        try:
            return cls(values, str(meta.get("source_id", "")), str(meta.get("fingerprint", "")))
        except ValueError as exc:
            raise FormatError(f"{what}: {exc}") from exc

    def save(self, path) -> None:
        Path(path).write_bytes(self.to_bytes())

    @classmethod
    def load(cls, path) -> "Spectrogram":
        return cls.from_bytes(Path(path).read_bytes(), what=str(path))


def hann_window(n: int) -> np.ndarray:
    """Periodic Hann window ``0.5 * (1 - cos(2 pi k / n))``."""
    if n < 1:
        raise ValueError(f"window length must be >= 1, got {n}")
    k = np.arange(n, dtype=np.float64)
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * k / n)


def stft_magnitude(signal, cfg: StftConfig = StftConfig()) -> np.ndarray:
    """Return ``|STFT|`` with shape ``(n_fft // 2 + 1, n_frames)``."""
    x = np.asarray(signal, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError(f"signal must be 1-D, got shape {x.shape}")
    if x.size == 0:
        raise SignalTooShort("cannot transform an empty signal")
    if cfg.center:
        pad = cfg.n_fft // 2
        x = np.pad(x, (pad, pad), mode="constant")
    elif x.size < cfg.n_fft:
        raise SignalTooShort(f"signal of {x.size} samples is shorter than n_fft={cfg.n_fft}")
    frames = np.lib.stride_tricks.sliding_window_view(x, cfg.n_fft)[:: cfg.hop_length]
    spectrum = np.fft.rfft(frames * hann_window(cfg.n_fft), axis=1)
    return np.abs(spectrum).T


def amplitude_to_db(magnitudes, cfg: DbConfig = DbConfig()) -> np.ndarray:
    a = np.asarray(magnitudes, dtype=np.float64)
    if (a < 0).any():
        raise ValueError("magnitudes must be non-negative")
    db = 20.0 * np.log10(np.maximum(cfg.amin, a))
    db -= 20.0 * np.log10(max(cfg.amin, cfg.ref_value))
    if cfg.top_db is not None and db.size:
        db = np.maximum(db, db.max() - cfg.top_db)
    return db


def compute_spectrogram(
    signal,
    stft_cfg: StftConfig = StftConfig(),
    db_cfg: DbConfig = DbConfig(),
    source_id: str = "",
) -> Spectrogram:
    db = amplitude_to_db(stft_magnitude(signal, stft_cfg), db_cfg)
    return Spectrogram(db, source_id=source_id, fingerprint=config_fingerprint(stft_cfg, db_cfg))
