"""Entry-wise quantile pooling of training spectrograms."""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .containers import pack_qref1, unpack_qref1
from .errors import ConfigMismatch, DomainError, EmptyInput, FormatError, ShapeMismatch
from .spectrogram import Spectrogram

QUANTILE_RULE = "linear-(N-1)z"


def _check_level(z: float) -> float:
    z = float(z)
    if not 0.0 <= z <= 1.0:
        raise DomainError(f"quantile level must lie in [0, 1], got {z}")
    return z


def _position(count: int, z: float) -> tuple[int, float]:
    h = (count - 1) * z
    lo = min(int(math.floor(h)), count - 1)
    return lo, h - lo


def quantile(values: Iterable[float], z: float) -> float:
    """Linear-interpolation quantile at position ``(N - 1) * z``.

    The interpolated value is clamped to its bracketing order statistics so
    that rounding can never push it past the upper one; this keeps the result
    monotone in ``z`` and inside ``[min, max]``.
    """
    z = _check_level(z)
    v = sorted(float(x) for x in values)
    if not v:
        raise EmptyInput("quantile of an empty collection")
    lo, frac = _position(len(v), z)
    hi = min(lo + 1, len(v) - 1)
    a, b = v[lo], v[hi]
    return min(max(a + frac * (b - a), a), b)


def quantile_from_sorted(sorted_stack: np.ndarray, z: float) -> np.ndarray:
    """Per-column quantile of a stack already sorted along axis 0."""
    z = _check_level(z)
    lo, frac = _position(sorted_stack.shape[0], z)
    hi = min(lo + 1, sorted_stack.shape[0] - 1)
    a, b = sorted_stack[lo], sorted_stack[hi]
    return np.minimum(np.maximum(a + frac * (b - a), a), b)


@dataclass(frozen=True, eq=False)
class ReferenceSpectrogram:
    values: np.ndarray
    z: float
    training_count: int
    fingerprint: str = ""
    quantile_rule: str = QUANTILE_RULE

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64)
        if values.ndim != 2:
            raise ValueError(f"reference values must be 2-D, got shape {values.shape}")
        _check_level(self.z)
        if self.training_count < 1:
            raise ValueError("training_count must be at least 1")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    @property
    def n(self) -> int:
        return self.values.size

    def to_bytes(self) -> bytes:
        meta = {"fingerprint": self.fingerprint, "quantile_rule": self.quantile_rule}
        return pack_qref1(self.values, self.z, self.training_count, meta)

    @classmethod
    def from_bytes(cls, data: bytes, what: str = "QREF1") -> "ReferenceSpectrogram":
        values, z, count, meta = unpack_qref1(data, what)
        try:
            return cls(values, z, count, str(meta.get("fingerprint", "")),
                       str(meta.get("quantile_rule", QUANTILE_RULE)))
        except ValueError as exc:
            raise FormatError(f"{what}: {exc}") from exc


def _stack(spectrograms: Sequence[Spectrogram]) -> tuple[np.ndarray, str]:
    if len(spectrograms) == 0:
        raise EmptyInput("cannot build a reference from zero spectrograms")
    first = spectrograms[0]
    for s in spectrograms[1:]:
        if s.shape != first.shape:
            raise ShapeMismatch(
                f"{s.source_id or 'spectrogram'} has shape {s.shape}, expected {first.shape}"
            )
        if s.fingerprint != first.fingerprint:
            raise ConfigMismatch(
                f"{s.source_id or 'spectrogram'} has config fingerprint {s.fingerprint!r}, "
                f"expected {first.fingerprint!r}"
            )
    stack = np.stack([s.values for s in spectrograms])
    stack.sort(axis=0)
    return stack, first.fingerprint


def build_references(
    spectrograms: Sequence[Spectrogram], z_levels: Iterable[float]
) -> dict[float, ReferenceSpectrogram]:
    """Build one reference per level, sorting the training stack only once."""
    stack, fingerprint = _stack(spectrograms)
    n = stack.shape[0]
    return {
        float(z): ReferenceSpectrogram(quantile_from_sorted(stack, z), float(z), n, fingerprint)
        for z in z_levels
    }


def build_reference(spectrograms: Sequence[Spectrogram], z: float) -> ReferenceSpectrogram:
    z = _check_level(z)
    return build_references(spectrograms, [z])[z]


def save_reference(ref: ReferenceSpectrogram, path) -> None:
    Path(path).write_bytes(ref.to_bytes())


def load_reference(path) -> ReferenceSpectrogram:
    return ReferenceSpectrogram.from_bytes(Path(path).read_bytes(), what=str(path))
