"""Difference spectrograms, the four deviation metrics, and explanation export."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import gammaln, logsumexp

from .containers import pack_spec1
from .errors import ConfigMismatch, DomainError, ShapeMismatch
from .reference import ReferenceSpectrogram
from .spectrogram import Spectrogram


class Metric(str, enum.Enum):
    # declaration order is the tie-break order used by tuning
    COUNTING = "counting"
    SUM = "sum"
    MEAN = "mean"
    BINOMIAL = "binomial"

    @classmethod
    def parse(cls, name) -> "Metric":
        if isinstance(name, cls):
            return name
        try:
            return cls(str(name).lower())
        except ValueError:
            raise ValueError(
                f"unknown metric {name!r}; choose from {[m.value for m in cls]}"
            ) from None

    @property
    def rank(self) -> int:
        return list(Metric).index(self)


ALL_METRICS = tuple(Metric)


@dataclass(frozen=True, eq=False)
class DifferenceSpectrogram:
    values: np.ndarray
    exceedance_count: int
    source_id: str = ""
    z: float = float("nan")
    fingerprint: str = ""

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    @property
    def n(self) -> int:
        return self.values.size


@dataclass(frozen=True)
class AnomalyScore:
    metric: Metric
    value: float
    raw_k: int
    n: int
    log_pmf: float | None = None


def difference_spectrogram(W: Spectrogram, Q: ReferenceSpectrogram) -> DifferenceSpectrogram:
    if W.shape != Q.shape:
        raise ShapeMismatch(
            f"{W.source_id or 'spectrogram'} has shape {W.shape}, reference has {Q.shape}"
        )
    if W.fingerprint != Q.fingerprint:
        raise ConfigMismatch(
            f"{W.source_id or 'spectrogram'} was computed with config {W.fingerprint!r}, "
            f"reference with {Q.fingerprint!r}"
        )
    d = np.maximum(0.0, W.values - Q.values)
    d.setflags(write=False)
    return DifferenceSpectrogram(
        d, int(np.count_nonzero(d > 0)), W.source_id, Q.z, W.fingerprint
    )


def score_counting(D: DifferenceSpectrogram) -> AnomalyScore:
    return AnomalyScore(Metric.COUNTING, float(D.exceedance_count), D.exceedance_count, D.n)


def score_sum(D: DifferenceSpectrogram) -> AnomalyScore:
    return AnomalyScore(Metric.SUM, float(D.values.sum()), D.exceedance_count, D.n)


def score_mean(D: DifferenceSpectrogram) -> AnomalyScore:
    k = D.exceedance_count
    # no exceedances means nothing to average: treat as maximally normal
    value = float(D.values.sum()) / k if k else 0.0
    return AnomalyScore(Metric.MEAN, value, k, D.n)


def _log_pmf_terms(ks: np.ndarray, n: int, z: float) -> np.ndarray:
    return (
        gammaln(n + 1.0) - gammaln(ks + 1.0) - gammaln(n - ks + 1.0)
        + ks * math.log1p(-z) + (n - ks) * math.log(z)
    )


def binomial_log_pmf(k: int, n: int, z: float) -> float:
    """``log C(n, k) + k log(1 - z) + (n - k) log z``."""
    _check_binomial(k, n, z)
    return float(
        math.lgamma(n + 1) - math.lgamma(k + 1) - math.lgamma(n - k + 1)
        + (k * math.log1p(-z) if k else 0.0)
        + ((n - k) * math.log(z) if n - k else 0.0)
    )


def binomial_log_sf(k: int, n: int, z: float) -> float:
    """``log P(K >= k)`` for ``K ~ Binomial(n, 1 - z)``.

    Whichever tail is smaller gets summed in log space; the other side is
    recovered with a cancellation-free ``log(1 - exp(x))``.
    """
    _check_binomial(k, n, z)
    if k == 0:
        return 0.0
    if k - 1 < n * (1.0 - z):
        log_cdf = float(logsumexp(_log_pmf_terms(np.arange(k, dtype=np.float64), n, z)))
        return _log1mexp(log_cdf)
    return float(logsumexp(_log_pmf_terms(np.arange(k, n + 1, dtype=np.float64), n, z)))


def _log1mexp(x: float) -> float:
    if x >= 0.0:
        return -math.inf
    if x > -math.log(2.0):
        return math.log(-math.expm1(x))
    return math.log1p(-math.exp(x))


def _check_binomial(k: int, n: int, z: float) -> None:
    if not 0 < z < 1:
        raise DomainError(f"binomial level z must lie in (0, 1), got {z}")
    if n < 0 or not 0 <= k <= n:
        raise DomainError(f"need 0 <= k <= n, got k={k}, n={n}")


def score_binomial(k: int, n: int, z: float) -> AnomalyScore:
    """Binomial exceedance score.

    ``value`` is the upper-tail surprise ``-log P(K >= k)``, which grows with
    ``k``. The literal point probability is kept as ``log_pmf``; it is not
    monotone in ``k`` and would flag samples with too *few* exceedances.
    """
    k, n = int(k), int(n)
    log_pmf = binomial_log_pmf(k, n, z)
    return AnomalyScore(Metric.BINOMIAL, -binomial_log_sf(k, n, z), k, n, log_pmf)


def score_difference(D: DifferenceSpectrogram, metric) -> AnomalyScore:
    metric = Metric.parse(metric)
    if metric is Metric.COUNTING:
        return score_counting(D)
    if metric is Metric.SUM:
        return score_sum(D)
    if metric is Metric.MEAN:
        return score_mean(D)
    return score_binomial(D.exceedance_count, D.n, D.z)


def score(W: Spectrogram, Q: ReferenceSpectrogram, metric) -> AnomalyScore:
    return score_difference(difference_spectrogram(W, Q), metric)


def write_pgm(D: DifferenceSpectrogram, path) -> None:
    """16-bit binary PGM, linear in ``[0, max(D)]``, frequency bin 0 at the bottom."""
    d = np.asarray(D.values, dtype=np.float64)
    peak = float(d.max()) if d.size else 0.0
    if peak > 0:
        pixels = np.rint(d / peak * 65535.0).astype(">u2")
    else:
        pixels = np.zeros(d.shape, dtype=">u2")
    pixels = np.ascontiguousarray(pixels[::-1, :])
    rows, cols = d.shape
    header = f"P5\n{cols} {rows}\n65535\n".encode("ascii")
    Path(path).write_bytes(header + pixels.tobytes())


def read_pgm(path) -> np.ndarray:
    """Read a binary PGM written by :func:`write_pgm` (image orientation)."""
    data = Path(path).read_bytes()
    tokens = []
    pos = 0
    while len(tokens) < 4:
        while data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            pos = data.index(b"\n", pos) + 1
            continue
        start = pos
        while not data[pos:pos + 1].isspace():
            pos += 1
        tokens.append(data[start:pos])
    pos += 1
    if tokens[0] != b"P5":
        raise ValueError(f"{path}: not a binary PGM")
    width, height, maxval = (int(t) for t in tokens[1:])
    dtype = ">u2" if maxval > 255 else "u1"
    return np.frombuffer(data, dtype=dtype, count=width * height, offset=pos).reshape(height, width)


def export_explanation(D: DifferenceSpectrogram, path, format: str = "image") -> Path:
    path = Path(path)
    if format == "image":
        write_pgm(D, path)
    elif format == "matrix":
        meta = {
            "kind": "difference",
            "source_id": D.source_id,
            "fingerprint": D.fingerprint,
            "z": D.z,
            "exceedance_count": D.exceedance_count,
        }
        path.write_bytes(pack_spec1(D.values, meta))
    else:
        raise ValueError(f"unknown explanation format {format!r}; use 'image' or 'matrix'")
    return path

