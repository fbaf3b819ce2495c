"""Exceedance counts versus the binomial expectation on synthetic data.

Under entry-wise independence, a normal sample exceeds a z-quantile reference
at about ``(1 - z) * n`` entries. This module measures the observed mean on
i.i.d. Gaussian spectrograms, where that model holds exactly up to the
finite-sample error of the reference itself.
"""

from __future__ import annotations

import csv
import logging
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .reference import quantile_from_sorted
from .spectrogram import Spectrogram

log = logging.getLogger(__name__)

DEFAULT_Z_LIST = (0.5, 0.75, 0.9, 0.95, 0.99)
DEFAULT_SPLIT_SEEDS = (0, 1, 2, 3, 4)
SYNTHETIC_FINGERPRINT = "synthetic"


class QuantileGranularityWarning(UserWarning):
    """Fewer than one training sample is expected above the requested quantile."""


@dataclass(frozen=True, eq=False)
class SyntheticSpec:
    rows: int = 100
    cols: int = 100
    entry_means: np.ndarray | None = None
    noise_sigma: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1:
            raise ValueError("rows and cols must be >= 1")
        if not self.noise_sigma > 0:
            raise ValueError("noise_sigma must be positive")
        if self.entry_means is not None:
            means = np.asarray(self.entry_means, dtype=np.float64)
            if means.shape != (self.rows, self.cols):
                raise ValueError(
                    f"entry_means has shape {means.shape}, expected {(self.rows, self.cols)}"
                )
            object.__setattr__(self, "entry_means", means)

    @property
    def n(self) -> int:
        return self.rows * self.cols


@dataclass(frozen=True)
class ExceedanceReport:
    z: float
    n: int
    train_count: int
    test_count: int
    mean_count: float
    expected: float
    relative_deviation: float
    std_over_seeds: float


def synth_array(spec: SyntheticSpec, count: int, rng: np.random.Generator | None = None) -> np.ndarray:
    """``(count, rows, cols)`` array of means plus i.i.d. Gaussian noise."""
    if count < 1:
        raise ValueError("count must be >= 1")
    if rng is None:
        rng = np.random.default_rng(spec.seed)
    x = rng.standard_normal((count, spec.rows, spec.cols))
    x *= spec.noise_sigma
    if spec.entry_means is not None:
        x += spec.entry_means
    return x


def synth_generate(spec: SyntheticSpec, count: int) -> list[Spectrogram]:
    arr = synth_array(spec, count)
    return [
        Spectrogram(a, source_id=f"synthetic-{spec.seed}-{i:06d}", fingerprint=SYNTHETIC_FINGERPRINT)
        for i, a in enumerate(arr)
    ]


def interpolation_bias(train_count: int, z: float) -> float:
    """Expected relative excess of exceedances caused by the quantile estimate.

    With the linear ``(N - 1) z`` rule the reference sits, on average, at
    rank ``(N - 1) z + 1`` of ``N + 1`` gaps, so a fresh sample exceeds it
    with probability ``(N (1 - z) + z) / (N + 1)`` rather than ``1 - z``.
    """
    return (2.0 * z - 1.0) / ((train_count + 1) * (1.0 - z))


def check_granularity(train_count: int, z: float) -> bool:
    """Warn when ``train_count * (1 - z) < 1``; return whether the level is resolvable."""
    if train_count * (1.0 - z) < 1.0:
        warnings.warn(
            f"z={z} with {train_count} training samples: fewer than one sample lies "
            f"above the quantile, so the reference is essentially the training maximum",
            QuantileGranularityWarning,
            stacklevel=2,
        )
        return False
    return True


def exceedance_experiment(
    train_count: int = 2000,
    test_count: int = 500,
    spec: SyntheticSpec = SyntheticSpec(),
    z_list: Sequence[float] = DEFAULT_Z_LIST,
    split_seeds: Sequence[int] = DEFAULT_SPLIT_SEEDS,
) -> list[ExceedanceReport]:
    """Average exceedance count per test sample, one report per level.

    One pool of ``train_count + test_count`` samples is drawn from ``spec``;
    each split seed then reshuffles the pool into train and test parts.
    """
    if train_count < 1 or test_count < 1:
        raise ValueError("train_count and test_count must be >= 1")
    if not split_seeds:
        raise ValueError("need at least one split seed")
    z_list = [float(z) for z in z_list]
    for z in z_list:
        if not 0 < z < 1:
            raise ValueError(f"levels must lie in (0, 1), got {z}")
        check_granularity(train_count, z)

    total = train_count + test_count
    pool = synth_array(spec, total).reshape(total, spec.n)
    per_seed = np.empty((len(split_seeds), len(z_list)))
    for s, seed in enumerate(split_seeds):
        perm = np.random.default_rng([spec.seed, seed]).permutation(total)
        train = pool[perm[:train_count]]
        train.sort(axis=0)
        test = pool[perm[train_count:]]
        for i, z in enumerate(z_list):
            ref = quantile_from_sorted(train, z)
            per_seed[s, i] = np.count_nonzero(test > ref, axis=1).mean()
        log.debug("split seed %d done", seed)

    reports = []
    for i, z in enumerate(z_list):
        expected = (1.0 - z) * spec.n
        means = per_seed[:, i]
        mean_count = float(means.mean())
        rel = (means - expected) / expected
        std = float(rel.std(ddof=1)) if len(rel) > 1 else 0.0
        reports.append(ExceedanceReport(
            z=z, n=spec.n, train_count=train_count, test_count=test_count,
            mean_count=mean_count, expected=expected,
            relative_deviation=abs(mean_count - expected) / expected,
            std_over_seeds=std,
        ))
    return reports


REPORT_HEADER = ("z", "n", "train_count", "test_count", "mean_count", "expected",
                 "relative_deviation", "std_over_seeds")


def write_report_csv(reports: Sequence[ExceedanceReport], path) -> None:
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(REPORT_HEADER)
        for r in reports:
            w.writerow((repr(r.z), r.n, r.train_count, r.test_count, repr(r.mean_count),
                        repr(r.expected), repr(r.relative_deviation), repr(r.std_over_seeds)))


def plot_report_svg(reports: Sequence[ExceedanceReport], path) -> None:
    """Relative deviation against z with seed-to-seed error bars (needs matplotlib)."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    zs = [r.z for r in reports]
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.errorbar(zs, [100 * r.relative_deviation for r in reports],
                yerr=[100 * r.std_over_seeds for r in reports], fmt="o", capsize=3)
    ax.set_xlabel("quantile level z")
    ax.set_ylabel("relative deviation [%]")
    ax.set_ylim(bottom=0)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def synth_anomalies(
    spec: SyntheticSpec,
    count: int,
    patch: tuple[int, int] = (8, 8),
    shift: float = 1.0,
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """Synthetic samples with ``shift`` added to one randomly placed patch each."""
    ph, pw = patch
    if not (1 <= ph <= spec.rows and 1 <= pw <= spec.cols):
        raise ValueError(f"patch {patch} does not fit a {spec.rows}x{spec.cols} grid")
    if rng is None:
        rng = np.random.default_rng(spec.seed)
    x = synth_array(spec, count, rng)
    r0 = rng.integers(0, spec.rows - ph + 1, size=count)
    c0 = rng.integers(0, spec.cols - pw + 1, size=count)
    for sample, r, c in zip(x, r0, c0):
        sample[r:r + ph, c:c + pw] += shift
    return x
