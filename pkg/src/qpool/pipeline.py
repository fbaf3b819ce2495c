"""Run configuration and file-to-spectrogram loading shared by the CLI."""

from __future__ import annotations

import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Sequence

from .audio_io import read_wav, select_channel
from .errors import UnreadablePath
from .spectrogram import DbConfig, Spectrogram, StftConfig, compute_spectrogram
from .tuning import DEFAULT_SEEDS, GridConfig

SPEC_SUFFIX = ".spec"


@dataclass(frozen=True)
class RunConfig:
    stft: StftConfig = field(default_factory=StftConfig)
    db: DbConfig = field(default_factory=DbConfig)
    channel: int = 0
    sample_rate: int | None = 16000
    grid: GridConfig = field(default_factory=GridConfig)
    seeds: tuple[int, ...] = DEFAULT_SEEDS

    def __post_init__(self):
        if self.channel < 0:
            raise ValueError(f"channel must be non-negative, got {self.channel}")
        if self.sample_rate is not None and self.sample_rate <= 0:
            raise ValueError(f"sample_rate must be positive, got {self.sample_rate}")
        if not self.seeds:
            raise ValueError("need at least one seed")

    def to_dict(self) -> dict:
        return {
            "stft": asdict(self.stft),
            "db": asdict(self.db),
            "channel": self.channel,
            "sample_rate": self.sample_rate,
            "grid": self.grid.to_dict(),
            "seeds": list(self.seeds),
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "RunConfig":
        known = {"stft", "db", "channel", "sample_rate", "grid", "z_grid", "metrics", "seeds"}
        unknown = set(obj) - known
        if unknown:
            raise ValueError(f"unknown config keys {sorted(unknown)}")
        base = cls()
        grid = dict(obj.get("grid", {}))
        # the tuning config file format keeps grid keys at top level
        for key in ("z_grid", "metrics"):
            if key in obj:
                grid[key] = obj[key]
        return replace(
            base,
            stft=StftConfig(**obj["stft"]) if "stft" in obj else base.stft,
            db=DbConfig(**obj["db"]) if "db" in obj else base.db,
            channel=int(obj.get("channel", base.channel)),
            sample_rate=obj.get("sample_rate", base.sample_rate),
            grid=GridConfig(
                tuple(grid.get("z_grid", base.grid.z_grid)),
                tuple(grid.get("metrics", base.grid.metrics)),
            ),
            seeds=tuple(int(s) for s in obj.get("seeds", base.seeds)),
        )

    @classmethod
    def load(cls, path) -> "RunConfig":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n",
                              encoding="utf-8")


def load_spectrogram(path, cfg: RunConfig = RunConfig()) -> Spectrogram:
    """Read a SPEC1 file, or decode a WAV file and compute its spectrogram."""
    path = Path(path)
    if not path.is_file():
        raise UnreadablePath(f"{path}: no such file")
    if path.suffix.lower() == ".wav":
        clip = read_wav(path, cfg.sample_rate)
        signal = select_channel(clip, cfg.channel)
        return compute_spectrogram(signal, cfg.stft, cfg.db, source_id=str(path))
    return Spectrogram.load(path)


def _load_one(args):
    path, cfg = args
    return load_spectrogram(path, cfg)


def load_many(paths: Sequence[str], cfg: RunConfig = RunConfig(), jobs: int = 1) -> dict[str, Spectrogram]:
    """Load spectrograms keyed by path; ``jobs > 1`` uses worker processes."""
    paths = list(paths)
    if jobs <= 1 or len(paths) < 2:
        return {p: load_spectrogram(p, cfg) for p in paths}
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        loaded = pool.map(_load_one, [(p, cfg) for p in paths], chunksize=4)
        return dict(zip(paths, loaded))
