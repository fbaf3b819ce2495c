"""Command-line interface: ``qpool <command> ...``.

Typical two-stage use::

    qpool spectrogram data/fan/id_00 -o specs/            # WAV -> SPEC1, once
    qpool fit specs/normal --z 0.99 -o fan00.qref
    qpool score fan00.qref specs/test --metric mean --explain-dir expl/
    qpool tune manifest.csv -o results/
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import warnings
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .audio_io import DatasetManifest, ManifestEntry, scan_dataset, write_manifest
from .errors import EmptyDataset, QpoolError, UnreadablePath
from .evaluation import make_splits
from .pipeline import SPEC_SUFFIX, RunConfig, load_many
from .reference import build_reference, load_reference, save_reference
from .scoring import (
    ALL_METRICS,
    Metric,
    binomial_log_pmf,
    difference_spectrogram,
    export_explanation,
    score_difference,
)
from .spectrogram import DbConfig, Spectrogram, StftConfig
from .tuning import GridConfig, run_protocol, write_results_csv, write_tuning_csv
from .validation import (
    DEFAULT_Z_LIST,
    SYNTHETIC_FINGERPRINT,
    SyntheticSpec,
    exceedance_experiment,
    plot_report_svg,
    synth_anomalies,
    synth_array,
    write_report_csv,
)

log = logging.getLogger("qpool")

RUN_CONFIG_NAME = "run_config.json"
SCORE_HEADER = ("path", "metric", "value", "k", "n", "z", "log_pmf")


def _global_options(parser: argparse.ArgumentParser, suppress: bool) -> None:
    default = argparse.SUPPRESS if suppress else None
    parser.add_argument("--config", default=default, help="JSON run configuration")
    parser.add_argument("--jobs", type=int, default=argparse.SUPPRESS if suppress else 1,
                        help="worker processes for file loading")
    parser.add_argument("--seed", type=int, default=default,
                        help="seed for single-seed commands (split, synth)")
    parser.add_argument("-v", "--verbose", action="store_true",
                        default=argparse.SUPPRESS if suppress else False)


def _preprocessing_options(parser: argparse.ArgumentParser) -> None:
    g = parser.add_argument_group("preprocessing (WAV inputs)")
    g.add_argument("--channel", type=int, help="channel index to analyse (default 0)")
    g.add_argument("--sample-rate", type=int,
                   help="required sample rate in Hz, 0 to accept any (default 16000)")
    g.add_argument("--n-fft", type=int, help="STFT window length (default 2048)")
    g.add_argument("--hop-length", type=int, help="STFT hop (default n_fft/4)")
    g.add_argument("--top-db", type=float,
                   help="dynamic range below the peak in dB, negative to disable (default 80)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qpool", description="Quantile-pooling anomaly detection for spectrograms."
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    _global_options(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("spectrogram", help="WAV files to SPEC1 spectrograms")
    p.add_argument("inputs", nargs="+", help="WAV files or directories")
    p.add_argument("-o", "--output", required=True,
                   help="output .spec file (single input) or directory")
    _preprocessing_options(p)

    p = sub.add_parser("fit", help="build a quantile reference from normal samples")
    p.add_argument("inputs", nargs="+",
                   help="SPEC1/WAV files, directories, or manifest .csv files (normal rows used)")
    p.add_argument("--z", type=float, default=0.99, help="quantile level (default 0.99)")
    p.add_argument("-o", "--output", required=True, help="output .qref file")
    _preprocessing_options(p)

    p = sub.add_parser("score", help="score samples against a reference")
    p.add_argument("reference", help="QREF1 file")
    p.add_argument("inputs", nargs="+", help="SPEC1/WAV files, directories or manifests")
    p.add_argument("--metric", default="mean",
                   help="counting, sum, mean, binomial or all (default mean)")
    p.add_argument("-o", "--output", help="CSV output (default stdout)")
    p.add_argument("--explain-dir", help="write one explanation per input here")
    p.add_argument("--explain-format", choices=("image", "matrix", "both"), default="image")
    _preprocessing_options(p)

    p = sub.add_parser("tune", help="grid search and multi-seed test protocol")
    p.add_argument("manifest", help="manifest .csv, or dataset root with --layout mimii")
    p.add_argument("--layout", choices=("csv", "mimii"), default=None,
                   help="default: csv for files, mimii for directories")
    p.add_argument("--grid", help="JSON with z_grid, metrics, seeds")
    p.add_argument("--seeds", help="comma-separated split seeds (default 0,1,2,3,4)")
    p.add_argument("-o", "--output", required=True, help="output directory")
    _preprocessing_options(p)

    p = sub.add_parser("split", help="write a train/validation/test plan")
    p.add_argument("manifest", help="manifest .csv, or dataset root with --layout mimii")
    p.add_argument("--layout", choices=("csv", "mimii"), default=None)
    p.add_argument("-o", "--output", help="plan JSON (default stdout)")

    p = sub.add_parser("validate-binomial",
                       help="exceedance counts versus the binomial expectation")
    p.add_argument("--rows", type=int, default=100)
    p.add_argument("--cols", type=int, default=100)
    p.add_argument("--train", type=int, default=2000, help="training samples per split")
    p.add_argument("--test", type=int, default=500, help="test samples per split")
    p.add_argument("--sigma", type=float, default=1.0, help="noise standard deviation")
    p.add_argument("--z", type=float, action="append",
                   help="quantile level, repeatable (default 0.5 0.75 0.9 0.95 0.99)")
    p.add_argument("--split-seeds", default="0,1,2,3,4")
    p.add_argument("-o", "--output", required=True, help="report CSV")
    p.add_argument("--svg", help="optional plot of relative deviation against z")

    p = sub.add_parser("synth", help="write a synthetic Gaussian dataset with a manifest")
    p.add_argument("-o", "--output", required=True, help="output directory")
    p.add_argument("--rows", type=int, default=64)
    p.add_argument("--cols", type=int, default=64)
    p.add_argument("--normal", type=int, default=700)
    p.add_argument("--anormal", type=int, default=200)
    p.add_argument("--patch", type=int, default=8, help="side of the shifted square patch")
    p.add_argument("--shift", type=float, default=1.0, help="added to the patch")
    p.add_argument("--machine-type", default="synthetic")
    p.add_argument("--machine-id", default="00")

    for p in sub.choices.values():
        _global_options(p, suppress=True)
    return parser


def _run_config(args) -> RunConfig:
    cfg = RunConfig.load(args.config) if args.config else RunConfig()
    stft = cfg.stft
    if getattr(args, "n_fft", None) is not None:
        hop = getattr(args, "hop_length", None)
        stft = StftConfig(n_fft=args.n_fft, hop_length=hop, center=stft.center)
    elif getattr(args, "hop_length", None) is not None:
        stft = replace(stft, hop_length=args.hop_length)
    db = cfg.db
    if getattr(args, "top_db", None) is not None:
        db = replace(db, top_db=None if args.top_db < 0 else args.top_db)
    changes = {"stft": stft, "db": db}
    if getattr(args, "channel", None) is not None:
        changes["channel"] = args.channel
    if getattr(args, "sample_rate", None) is not None:
        changes["sample_rate"] = args.sample_rate or None
    return replace(cfg, **changes)


def _expand(inputs, suffixes) -> list[Path]:
    out = []
    for item in inputs:
        p = Path(item)
        if p.is_dir():
            found = sorted(f for f in p.rglob("*") if f.is_file() and f.suffix.lower() in suffixes)
            if not found:
                raise EmptyDataset(f"{p}: no {'/'.join(suffixes)} files")
            out.extend(found)
        elif p.is_file():
            out.append(p)
        else:
            raise UnreadablePath(f"{p}: no such file or directory")
    return out


def _sample_paths(inputs, normal_only: bool) -> list[str]:
    paths = []
    for p in _expand(inputs, (SPEC_SUFFIX, ".wav", ".csv")):
        if p.suffix.lower() == ".csv":
            manifest = scan_dataset(p, "csv")
            entries = manifest.normal if normal_only else manifest.entries
            paths.extend(e.path for e in entries)
        else:
            paths.append(str(p))
    if not paths:
        raise EmptyDataset("no input samples")
    return paths


def _load_manifest(path, layout) -> DatasetManifest:
    if layout is None:
        layout = "mimii" if Path(path).is_dir() else "csv"
    return scan_dataset(path, layout)


def cmd_spectrogram(args) -> int:
    cfg = _run_config(args)
    sources = _expand(args.inputs, (".wav",))
    out = Path(args.output)
    if len(sources) == 1 and out.suffix == SPEC_SUFFIX:
        targets = {str(sources[0]): out}
        out.parent.mkdir(parents=True, exist_ok=True)
        config_dir = out.parent
    else:
        targets = {}
        for src in sources:
            rel = _relative_to_inputs(src, args.inputs)
            targets[str(src)] = (out / rel).with_suffix(SPEC_SUFFIX)
        out.mkdir(parents=True, exist_ok=True)
        config_dir = out
    specs = load_many(list(targets), cfg, args.jobs)
    for src, target in targets.items():
        target.parent.mkdir(parents=True, exist_ok=True)
        specs[src].save(target)
        log.info("%s -> %s %s", src, target, specs[src].shape)
    cfg.save(config_dir / RUN_CONFIG_NAME)
    return 0


def _relative_to_inputs(src: Path, inputs) -> Path:
    for item in inputs:
        base = Path(item)
        if base.is_dir():
            try:
                return src.relative_to(base)
            except ValueError:
                continue
    return Path(src.name)


def cmd_fit(args) -> int:
    cfg = _run_config(args)
    paths = _sample_paths(args.inputs, normal_only=True)
    specs = load_many(paths, cfg, args.jobs)
    ref = build_reference([specs[p] for p in paths], args.z)
    out = Path(args.output)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_reference(ref, out)
    cfg.save(out.parent / RUN_CONFIG_NAME)
    log.info("reference %s from %d samples, z=%s", ref.shape, ref.training_count, ref.z)
    return 0


def cmd_score(args) -> int:
    cfg = _run_config(args)
    ref = load_reference(args.reference)
    metrics = ALL_METRICS if args.metric == "all" else (Metric.parse(args.metric),)
    paths = sorted(_sample_paths(args.inputs, normal_only=False))
    specs = load_many(paths, cfg, args.jobs)
    explain_dir = Path(args.explain_dir) if args.explain_dir else None
    if explain_dir:
        explain_dir.mkdir(parents=True, exist_ok=True)

    rows = []
    for path in paths:
        d = difference_spectrogram(specs[path], ref)
        log_pmf = binomial_log_pmf(d.exceedance_count, d.n, ref.z) if 0 < ref.z < 1 else None
        for metric in metrics:
            s = score_difference(d, metric)
            rows.append((path, metric.value, repr(s.value), s.raw_k, s.n, repr(ref.z),
                         "" if log_pmf is None else repr(log_pmf)))
        if explain_dir:
            stem = Path(path).stem
            if args.explain_format in ("image", "both"):
                export_explanation(d, _unique(explain_dir, stem, ".pgm"), "image")
            if args.explain_format in ("matrix", "both"):
                export_explanation(d, _unique(explain_dir, stem, ".diff.spec"), "matrix")

    if args.output:
        out = Path(args.output)
        out.parent.mkdir(parents=True, exist_ok=True)
        fh = out.open("w", encoding="utf-8", newline="")
    else:
        fh = sys.stdout
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SCORE_HEADER)
        w.writerows(rows)
    finally:
        if fh is not sys.stdout:
            fh.close()
    if args.output:
        cfg.save(Path(args.output).parent / RUN_CONFIG_NAME)
    return 0


def _unique(directory: Path, stem: str, suffix: str) -> Path:
    target = directory / f"{stem}{suffix}"
    i = 1
    while target.exists():
        target = directory / f"{stem}-{i}{suffix}"
        i += 1
    return target


def cmd_tune(args) -> int:
    cfg = _run_config(args)
    if args.grid:
        grid_obj = json.loads(Path(args.grid).read_text(encoding="utf-8"))
        cfg = replace(cfg, grid=GridConfig(
            tuple(grid_obj.get("z_grid", cfg.grid.z_grid)),
            tuple(grid_obj.get("metrics", cfg.grid.metrics)),
        ), seeds=tuple(int(s) for s in grid_obj.get("seeds", cfg.seeds)))
    if args.seeds:
        cfg = replace(cfg, seeds=tuple(int(s) for s in args.seeds.split(",")))
    manifest = _load_manifest(args.manifest, args.layout)
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)

    groups = []
    for (machine_type, machine_id), group in manifest.groups().items():
        specs = load_many([e.path for e in group], cfg, args.jobs)
        result = run_protocol(group, cfg.seeds, cfg.grid, spectrograms=specs)
        groups.append((machine_type, machine_id, result))
        print(f"{machine_type or '-'} {machine_id or '-'}: mean test AUC "
              f"{result.mean_test_auc:.4f} over {len(result.records)} seeds "
              f"({cfg.grid.n_cells} cells each)")
    write_tuning_csv(out / "tuning.csv", groups)
    write_results_csv(out / "results.csv", groups)
    cfg.save(out / RUN_CONFIG_NAME)
    return 0


def cmd_split(args) -> int:
    manifest = _load_manifest(args.manifest, args.layout)
    plan = make_splits(manifest, args.seed if args.seed is not None else 0)
    if args.output:
        plan.save(args.output)
    else:
        print(plan.to_json())
    return 0


def cmd_validate_binomial(args) -> int:
    z_list = tuple(args.z) if args.z else DEFAULT_Z_LIST
    spec = SyntheticSpec(args.rows, args.cols, None, args.sigma,
                         args.seed if args.seed is not None else 0)
    seeds = tuple(int(s) for s in args.split_seeds.split(","))
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        reports = exceedance_experiment(args.train, args.test, spec, z_list, seeds)
    for w in caught:
        print(f"warning: {w.category.__name__}: {w.message}", file=sys.stderr)
    out = Path(args.output)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_report_csv(reports, out)
    if args.svg:
        plot_report_svg(reports, args.svg)
    for r in reports:
        print(f"z={r.z}: mean {r.mean_count:.2f} vs expected {r.expected:.2f} "
              f"({100 * r.relative_deviation:.2f}% off)")
    return 0


def cmd_synth(args) -> int:
    seed = args.seed if args.seed is not None else 0
    spec = SyntheticSpec(args.rows, args.cols, seed=seed)
    rng = np.random.default_rng(seed)
    normal = synth_array(spec, args.normal, rng)
    anormal = synth_anomalies(spec, args.anormal, (args.patch, args.patch), args.shift, rng)
    out = Path(args.output)
    entries = []
    for label, arr in (("normal", normal), ("anormal", anormal)):
        (out / label).mkdir(parents=True, exist_ok=True)
        for i, values in enumerate(arr):
            rel = Path(label) / f"{i:05d}{SPEC_SUFFIX}"
            Spectrogram(values, str(rel), SYNTHETIC_FINGERPRINT).save(out / rel)
            entries.append(ManifestEntry(str(rel), label, args.machine_type, args.machine_id, ""))
    write_manifest(entries, out / "manifest.csv")
    print(f"wrote {len(entries)} spectrograms and {out / 'manifest.csv'}")
    return 0


COMMANDS = {
    "spectrogram": cmd_spectrogram,
    "fit": cmd_fit,
    "score": cmd_score,
    "tune": cmd_tune,
    "split": cmd_split,
    "validate-binomial": cmd_validate_binomial,
    "synth": cmd_synth,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return COMMANDS[args.command](args)
    except (QpoolError, OSError, ValueError, KeyError) as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
