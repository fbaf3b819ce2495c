"""ROC-AUC and the train/validation/test split protocol."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .audio_io import DatasetManifest
from .errors import DegenerateLabels, InsufficientSamples, NonFiniteScore
from .reference import build_reference
from .scoring import Metric, difference_spectrogram, score_difference
from .spectrogram import Spectrogram

_MASK64 = (1 << 64) - 1


class SplitMix64:
    """SplitMix64 (Steele, Lea & Flood 2014): a tiny 64-bit generator whose
    output sequence is trivial to reproduce in any language."""

    def __init__(self, seed: int):
        self.state = seed & _MASK64

    def next_u64(self) -> int:
        self.state = (self.state + 0x9E3779B97F4A7C15) & _MASK64
        x = self.state
        x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
        return x ^ (x >> 31)

    def below(self, bound: int) -> int:
        """Uniform integer in ``[0, bound)`` by rejection (no modulo bias)."""
        if bound <= 0:
            raise ValueError("bound must be positive")
        limit = _MASK64 - (_MASK64 + 1) % bound
        while True:
            x = self.next_u64()
            if x <= limit:
                return x % bound

    def shuffle(self, items: list) -> None:
        """In-place Fisher-Yates, swapping from the end downwards."""
        for i in range(len(items) - 1, 0, -1):
            j = self.below(i + 1)
            items[i], items[j] = items[j], items[i]


@dataclass(frozen=True)
class RocResult:
    auc: float
    n_pos: int
    n_neg: int


def _positive_mask(labels) -> np.ndarray:
    out = []
    for lab in labels:
        if isinstance(lab, str):
            if lab not in ("normal", "anormal"):
                raise ValueError(f"unknown label {lab!r}")
            out.append(lab == "anormal")
        else:
            out.append(bool(lab))
    return np.array(out, dtype=bool)


def midranks(values) -> np.ndarray:
    """1-based ranks, tied values sharing the mean of their positions."""
    x = np.asarray(values, dtype=np.float64)
    order = np.argsort(x, kind="mergesort")
    xs = x[order]
    ranks = np.empty(len(x), dtype=np.float64)
    # boundaries of runs of equal values
    starts = np.flatnonzero(np.r_[True, xs[1:] != xs[:-1]])
    ends = np.r_[starts[1:], len(x)]
    for s, e in zip(starts, ends):
        ranks[order[s:e]] = (s + e + 1) / 2.0
    return ranks


def roc_auc(scores, labels) -> RocResult:
    """Area under the ROC curve with ``anormal`` as the positive class.

    Equals the fraction of (anormal, normal) pairs ordered correctly, tied
    pairs counting one half.
    """
    s = np.asarray(scores, dtype=np.float64)
    pos = _positive_mask(labels)
    if s.shape != pos.shape:
        raise ValueError(f"{len(s)} scores but {len(pos)} labels")
    if not np.isfinite(s).all():
        raise NonFiniteScore("scores must be finite")
    n_pos = int(pos.sum())
    n_neg = len(pos) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise DegenerateLabels(f"need both classes, got {n_pos} anormal and {n_neg} normal")
    # work with doubled ranks so every quantity stays an integer
    twice_rank_sum = int(round(2.0 * midranks(s)[pos].sum()))
    twice_u = twice_rank_sum - n_pos * (n_pos + 1)
    return RocResult(twice_u / (2 * n_pos * n_neg), n_pos, n_neg)


@dataclass(frozen=True)
class SplitPlan:
    seed: int
    train: tuple[str, ...]
    validation: tuple[tuple[str, str], ...]
    test: tuple[tuple[str, str], ...]

    def to_json(self) -> str:
        return json.dumps({
            "seed": self.seed,
            "train": list(self.train),
            "validation": [{"id": i, "label": lab} for i, lab in self.validation],
            "test": [{"id": i, "label": lab} for i, lab in self.test],
        }, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "SplitPlan":
        obj = json.loads(text)
        return cls(
            seed=int(obj["seed"]),
            train=tuple(obj["train"]),
            validation=tuple((d["id"], d["label"]) for d in obj["validation"]),
            test=tuple((d["id"], d["label"]) for d in obj["test"]),
        )

    def save(self, path) -> None:
        Path(path).write_text(self.to_json() + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "SplitPlan":
        return cls.from_json(Path(path).read_text(encoding="utf-8"))

    def sizes(self) -> dict[str, tuple[int, int]]:
        """``{partition: (n_normal, n_anormal)}``."""
        def count(part):
            n_a = sum(1 for _, lab in part if lab == "anormal")
            return len(part) - n_a, n_a
        return {
            "train": (len(self.train), 0),
            "validation": count(self.validation),
            "test": count(self.test),
        }


def make_splits(manifest: DatasetManifest, seed: int) -> SplitPlan:
    """Balanced validation/test halves of the anormal data plus matching normals.

    Validation takes ``floor(n_anormal / 2)`` anormal samples, test the rest;
    each receives the same number of normals and every other normal trains.
    """
    normal = sorted(e.path for e in manifest.normal)
    anormal = sorted(e.path for e in manifest.anormal)
    if len(anormal) < 2:
        raise InsufficientSamples(f"need at least 2 anormal samples, got {len(anormal)}")
    if len(normal) < len(anormal):
        raise InsufficientSamples(
            f"need at least as many normal ({len(normal)}) as anormal ({len(anormal)}) samples"
        )
    rng = SplitMix64(seed)
    rng.shuffle(anormal)
    rng.shuffle(normal)
    n_val = len(anormal) // 2
    n_test = len(anormal) - n_val
    val = [(p, "normal") for p in normal[:n_val]] + [(p, "anormal") for p in anormal[:n_val]]
    test = [(p, "normal") for p in normal[n_val:n_val + n_test]]
    test += [(p, "anormal") for p in anormal[n_val:]]
    return SplitPlan(
        seed=seed,
        train=tuple(sorted(normal[n_val + n_test:])),
        validation=tuple(sorted(val)),
        test=tuple(sorted(test)),
    )


def evaluate(
    train: Sequence[Spectrogram],
    eval_set: Sequence[tuple[Spectrogram, str]],
    z: float,
    metric,
) -> RocResult:
    """Fit a reference at level ``z`` on ``train`` and report AUC on ``eval_set``.

    Preprocessing settings travel with the spectrograms as config fingerprints;
    a mismatch between train and evaluation data raises ``ConfigMismatch``.
    """
    metric = Metric.parse(metric)
    ref = build_reference(train, z)
    scores = [score_difference(difference_spectrogram(w, ref), metric).value for w, _ in eval_set]
    return roc_auc(scores, [lab for _, lab in eval_set])

