"""Grid search over (z, metric) and the multi-seed test protocol."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

from .audio_io import DatasetManifest
from .evaluation import SplitPlan, evaluate, make_splits, roc_auc
from .reference import build_references
from .scoring import ALL_METRICS, Metric, difference_spectrogram, score_difference
from .spectrogram import Spectrogram

DEFAULT_Z_GRID = (0.5, 0.6, 0.7, 0.8, 0.9, 0.95, 0.99)
DEFAULT_SEEDS = (0, 1, 2, 3, 4)


@dataclass(frozen=True)
class GridConfig:
    z_grid: tuple[float, ...] = DEFAULT_Z_GRID
    metrics: tuple[Metric, ...] = ALL_METRICS

    def __post_init__(self):
        z_grid = tuple(float(z) for z in self.z_grid)
        metrics = tuple(Metric.parse(m) for m in self.metrics)
        if not z_grid or not metrics:
            raise ValueError("z_grid and metrics must both be non-empty")
        for z in z_grid:
            if not 0 < z < 1:
                raise ValueError(f"grid levels must lie in (0, 1), got {z}")
        if len(set(z_grid)) != len(z_grid) or len(set(metrics)) != len(metrics):
            raise ValueError("grid contains duplicates")
        object.__setattr__(self, "z_grid", z_grid)
        object.__setattr__(self, "metrics", metrics)

    @property
    def n_cells(self) -> int:
        return len(self.z_grid) * len(self.metrics)

    def to_dict(self) -> dict:
        return {"z_grid": list(self.z_grid), "metrics": [m.value for m in self.metrics]}


@dataclass(frozen=True)
class Cell:
    z: float
    metric: Metric
    auc: float


@dataclass(frozen=True)
class GridResult:
    best_z: float
    best_metric: Metric
    validation_auc: float
    cells: tuple[Cell, ...]


@dataclass(frozen=True)
class TuningRecord:
    seed: int
    best_z: float
    best_metric: Metric
    validation_auc: float
    test_auc: float


@dataclass
class ProtocolResult:
    records: list[TuningRecord]
    mean_test_auc: float
    cells: dict[int, tuple[Cell, ...]] = field(default_factory=dict)


def _cell_key(cell: Cell):
    # highest AUC; on ties prefer larger z, then the earlier metric
    return (cell.auc, cell.z, -cell.metric.rank)


def grid_search(
    train: Sequence[Spectrogram],
    validation: Sequence[tuple[Spectrogram, str]],
    grid: GridConfig = GridConfig(),
) -> GridResult:
    """Score every (z, metric) cell on the validation set and pick the best.

    References are built once per level and difference spectrograms once per
    (level, sample); the metrics only summarise them differently.
    """
    refs = build_references(train, grid.z_grid)
    labels = [lab for _, lab in validation]
    cells = []
    for z in grid.z_grid:
        diffs = [difference_spectrogram(w, refs[z]) for w, _ in validation]
        for metric in grid.metrics:
            scores = [score_difference(d, metric).value for d in diffs]
            cells.append(Cell(z, metric, roc_auc(scores, labels).auc))
    best = max(cells, key=_cell_key)
    return GridResult(best.z, best.metric, best.auc, tuple(cells))


def run_protocol(
    manifest: DatasetManifest,
    seeds: Sequence[int] = DEFAULT_SEEDS,
    grid: GridConfig = GridConfig(),
    spectrograms: Mapping[str, Spectrogram] | None = None,
    loader: Callable[[str], Spectrogram] | None = None,
) -> ProtocolResult:
    """Split, tune on validation, and measure test AUC once per seed.

    Spectrograms are looked up by manifest path in ``spectrograms``; missing
    ones are produced with ``loader`` (one call per path, cached).
    """
    cache = dict(spectrograms or {})
    for entry in manifest:
        if entry.path not in cache:
            if loader is None:
                raise KeyError(f"no spectrogram for {entry.path} and no loader given")
            cache[entry.path] = loader(entry.path)

    records = []
    all_cells = {}
    for seed in seeds:
        plan = make_splits(manifest, seed)
        train, val, test = _materialise(plan, cache)
        tuned = grid_search(train, val, grid)
        test_auc = evaluate(train, test, tuned.best_z, tuned.best_metric).auc
        records.append(TuningRecord(seed, tuned.best_z, tuned.best_metric,
                                    tuned.validation_auc, test_auc))
        all_cells[seed] = tuned.cells
    mean = float(np.mean([r.test_auc for r in records])) if records else float("nan")
    return ProtocolResult(records, mean, all_cells)


def _materialise(plan: SplitPlan, cache: Mapping[str, Spectrogram]):
    train = [cache[i] for i in plan.train]
    val = [(cache[i], lab) for i, lab in plan.validation]
    test = [(cache[i], lab) for i, lab in plan.test]
    return train, val, test


def load_grid_config(path) -> tuple[GridConfig, tuple[int, ...]]:
    """Read ``{"z_grid": [...], "metrics": [...], "seeds": [...]}``; keys optional."""
    obj = json.loads(Path(path).read_text(encoding="utf-8"))
    grid = GridConfig(
        tuple(obj.get("z_grid", DEFAULT_Z_GRID)),
        tuple(obj.get("metrics", [m.value for m in ALL_METRICS])),
    )
    return grid, tuple(int(s) for s in obj.get("seeds", DEFAULT_SEEDS))


TUNING_HEADER = ("machine_type", "machine_id", "seed", "z", "metric", "validation_auc", "test_auc")
RESULTS_HEADER = ("machine_type", "machine_id", "seed", "z", "metric", "split", "auc")


def write_tuning_csv(path, groups: Sequence[tuple[str, str, ProtocolResult]]) -> None:
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TUNING_HEADER)
        for machine_type, machine_id, result in groups:
            for r in result.records:
                w.writerow((machine_type, machine_id, r.seed, repr(r.best_z),
                            r.best_metric.value, repr(r.validation_auc), repr(r.test_auc)))


def write_results_csv(path, groups: Sequence[tuple[str, str, ProtocolResult]]) -> None:
    """Every validation cell plus the tuned test AUC, one row each."""
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RESULTS_HEADER)
        for machine_type, machine_id, result in groups:
            for r in result.records:
                for c in result.cells.get(r.seed, ()):
                    w.writerow((machine_type, machine_id, r.seed, repr(c.z),
                                c.metric.value, "validation", repr(c.auc)))
                w.writerow((machine_type, machine_id, r.seed, repr(r.best_z),
                            r.best_metric.value, "test", repr(r.test_auc)))
