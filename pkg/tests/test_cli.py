import csv
import json

import numpy as np
import pytest

from qpool.audio_io import encode_wav
from qpool.cli import main
from qpool.evaluation import SplitPlan
from qpool.reference import load_reference
from qpool.scoring import read_pgm
from qpool.spectrogram import Spectrogram


def _save(path, values, fingerprint="test"):
    Spectrogram(np.asarray(values, dtype=float), path.stem, fingerprint).save(path)
    return path


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_zero_wav_gives_constant_floor(tmp_path):
    (tmp_path / "z.wav").write_bytes(encode_wav([np.zeros(16000)], 16000))
    assert main(["spectrogram", str(tmp_path / "z.wav"), "-o", str(tmp_path / "z.spec")]) == 0
    s = Spectrogram.load(tmp_path / "z.spec")
    assert s.shape == (1025, 32)
    assert np.all(s.values == -100.0)
    cfg = json.loads((tmp_path / "run_config.json").read_text())
    assert cfg["channel"] == 0 and cfg["stft"]["n_fft"] == 2048


def test_spectrogram_directory_and_channel(tmp_path):
    src = tmp_path / "wav"
    src.mkdir()
    t = np.arange(8000) / 8000
    tone = 0.5 * np.sin(2 * np.pi * 1000 * t)
    (src / "a.wav").write_bytes(encode_wav([np.zeros(8000), tone], 8000))
    args = ["spectrogram", str(src), "-o", str(tmp_path / "out"), "--sample-rate", "8000",
            "--n-fft", "256", "--channel", "1"]
    assert main(args) == 0
    s = Spectrogram.load(tmp_path / "out" / "a.spec")
    assert s.shape[0] == 129
    assert int(np.argmax(s.values[:, s.shape[1] // 2])) == 32


def test_unreadable_path_exits_nonzero(tmp_path, capsys):
    assert main(["spectrogram", str(tmp_path / "missing.wav"), "-o", str(tmp_path / "x.spec")]) == 1
    assert capsys.readouterr().err.startswith("UnreadablePath:")


def test_wrong_sample_rate_exits_nonzero(tmp_path, capsys):
    (tmp_path / "a.wav").write_bytes(encode_wav([np.zeros(4000)], 8000))
    assert main(["spectrogram", str(tmp_path / "a.wav"), "-o", str(tmp_path / "a.spec")]) == 1
    assert "SampleRateMismatch" in capsys.readouterr().err


def test_fit_single_file_is_that_file(tmp_path):
    v = np.random.default_rng(0).standard_normal((4, 6))
    _save(tmp_path / "a.spec", v)
    assert main(["fit", str(tmp_path / "a.spec"), "--z", "0.9", "-o", str(tmp_path / "r.qref")]) == 0
    ref = load_reference(tmp_path / "r.qref")
    assert ref.values.tobytes() == v.tobytes()
    assert (ref.z, ref.training_count) == (0.9, 1)


def test_fit_three_file_medians(tmp_path):
    d = tmp_path / "train"
    d.mkdir()
    mats = [[[1, 9], [4, 0]], [[3, 2], [5, 0]], [[2, 7], [6, 1]]]
    for i, m in enumerate(mats):
        _save(d / f"{i}.spec", m)
    assert main(["fit", str(d), "--z", "0.5", "-o", str(tmp_path / "r.qref")]) == 0
    np.testing.assert_array_equal(load_reference(tmp_path / "r.qref").values, [[2, 7], [5, 0]])


def test_fit_from_manifest_uses_normal_rows(tmp_path):
    _save(tmp_path / "n.spec", [[1.0]])
    _save(tmp_path / "a.spec", [[100.0]])
    (tmp_path / "m.csv").write_text("path,label\nn.spec,normal\na.spec,anormal\n")
    assert main(["fit", str(tmp_path / "m.csv"), "--z", "1.0", "-o", str(tmp_path / "r.qref")]) == 0
    assert load_reference(tmp_path / "r.qref").values[0, 0] == 1.0


def test_fit_mixed_shapes(tmp_path, capsys):
    _save(tmp_path / "a.spec", np.zeros((2, 2)))
    _save(tmp_path / "b.spec", np.zeros((2, 3)))
    assert main(["fit", str(tmp_path), "-o", str(tmp_path / "r.qref")]) == 1
    assert capsys.readouterr().err.startswith("ShapeMismatch:")


def test_score_training_file_at_z_one_counts_zero(tmp_path):
    rng = np.random.default_rng(1)
    for i in range(3):
        _save(tmp_path / f"t{i}.spec", rng.standard_normal((5, 5)))
    main(["fit", str(tmp_path), "--z", "1.0", "-o", str(tmp_path / "r.qref")])
    out = tmp_path / "s.csv"
    assert main(["score", str(tmp_path / "r.qref"), str(tmp_path / "t1.spec"),
                 "--metric", "counting", "-o", str(out)]) == 0
    (row,) = _rows(out)
    assert float(row["value"]) == 0 and row["k"] == "0" and row["n"] == "25"
    assert row["log_pmf"] == ""


def test_score_hand_case_and_all_metrics(tmp_path):
    _save(tmp_path / "q.spec", [[2, 2], [2, 2]])
    main(["fit", str(tmp_path / "q.spec"), "--z", "0.5", "-o", str(tmp_path / "r.qref")])
    _save(tmp_path / "w.spec", [[3, 1], [0, 5]])
    out = tmp_path / "s.csv"
    assert main(["score", str(tmp_path / "r.qref"), str(tmp_path / "w.spec"),
                 "--metric", "all", "-o", str(out)]) == 0
    rows = {r["metric"]: r for r in _rows(out)}
    assert list(rows) == ["counting", "sum", "mean", "binomial"]
    assert float(rows["mean"]["value"]) == 2.0
    assert float(rows["sum"]["value"]) == 4.0
    assert float(rows["counting"]["value"]) == 2.0
    assert float(rows["binomial"]["log_pmf"]) == pytest.approx(np.log(6 / 16))


def test_score_rows_sorted_by_path(tmp_path):
    d = tmp_path / "in"
    d.mkdir()
    for name in ("c", "a", "b"):
        _save(d / f"{name}.spec", [[0.0]])
    _save(tmp_path / "q.spec", [[0.0]])
    main(["fit", str(tmp_path / "q.spec"), "-o", str(tmp_path / "r.qref")])
    out = tmp_path / "s.csv"
    main(["--jobs", "2", "score", str(tmp_path / "r.qref"), str(d / "c.spec"), str(d / "a.spec"),
          str(d / "b.spec"), "-o", str(out)])
    assert [r["path"][-6:] for r in _rows(out)] == ["a.spec", "b.spec", "c.spec"]


def test_explain_writes_one_image_per_input(tmp_path):
    d = tmp_path / "in"
    d.mkdir()
    rng = np.random.default_rng(2)
    for i in range(4):
        _save(d / f"x{i}.spec", rng.standard_normal((3, 5)))
    _save(tmp_path / "q.spec", np.zeros((3, 5)))
    main(["fit", str(tmp_path / "q.spec"), "-o", str(tmp_path / "r.qref")])
    ex = tmp_path / "ex"
    assert main(["score", str(tmp_path / "r.qref"), str(d), "-o", str(tmp_path / "s.csv"),
                 "--explain-dir", str(ex), "--explain-format", "both"]) == 0
    assert len(list(ex.glob("*.pgm"))) == 4
    assert len(list(ex.glob("*.diff.spec"))) == 4
    assert read_pgm(ex / "x0.pgm").shape == (3, 5)


def test_score_config_mismatch(tmp_path, capsys):
    _save(tmp_path / "q.spec", [[0.0]], fingerprint="a")
    main(["fit", str(tmp_path / "q.spec"), "-o", str(tmp_path / "r.qref")])
    _save(tmp_path / "w.spec", [[0.0]], fingerprint="b")
    assert main(["score", str(tmp_path / "r.qref"), str(tmp_path / "w.spec")]) == 1
    assert capsys.readouterr().err.startswith("ConfigMismatch:")


def _synth(tmp_path, shift, normal=40, anormal=10):
    root = tmp_path / "data"
    assert main(["synth", "-o", str(root), "--rows", "16", "--cols", "16", "--normal", str(normal),
                 "--anormal", str(anormal), "--patch", "4", "--shift", str(shift)]) == 0
    return root / "manifest.csv"


def test_tune_separable_synthetic(tmp_path, capsys):
    manifest = _synth(tmp_path, shift=20.0)
    out = tmp_path / "res"
    assert main(["tune", str(manifest), "-o", str(out), "--seeds", "0,1"]) == 0
    assert "mean test AUC 1.0000 over 2 seeds (28 cells each)" in capsys.readouterr().out
    tuning = _rows(out / "tuning.csv")
    assert len(tuning) == 2 and all(float(r["test_auc"]) == 1.0 for r in tuning)
    results = _rows(out / "results.csv")
    assert sum(r["split"] == "validation" for r in results) == 2 * 28
    assert json.loads((out / "run_config.json").read_text())["seeds"] == [0, 1]


def test_tune_grid_file(tmp_path):
    manifest = _synth(tmp_path, shift=2.0)
    (tmp_path / "g.json").write_text('{"z_grid": [0.8, 0.9], "metrics": ["mean"], "seeds": [3]}')
    out = tmp_path / "res"
    assert main(["tune", str(manifest), "--grid", str(tmp_path / "g.json"), "-o", str(out)]) == 0
    (row,) = _rows(out / "tuning.csv")
    assert row["seed"] == "3" and row["metric"] == "mean" and row["z"] in ("0.8", "0.9")


def test_split_plan(tmp_path, capsys):
    manifest = _synth(tmp_path, shift=1.0, normal=30, anormal=9)
    capsys.readouterr()
    assert main(["split", str(manifest), "--seed", "4", "-o", str(tmp_path / "p.json")]) == 0
    plan = SplitPlan.load(tmp_path / "p.json")
    assert plan.seed == 4
    assert plan.sizes() == {"train": (21, 0), "validation": (4, 4), "test": (5, 5)}
    assert main(["split", str(manifest), "--seed", "4"]) == 0
    assert SplitPlan.from_json(capsys.readouterr().out) == plan


def test_validate_binomial_single_z(tmp_path):
    out = tmp_path / "r.csv"
    assert main(["validate-binomial", "--rows", "20", "--cols", "20", "--train", "200",
                 "--test", "50", "--z", "0.5", "-o", str(out), "--svg", str(tmp_path / "r.svg")]) == 0
    rows = _rows(out)
    assert len(rows) == 1 and rows[0]["z"] == "0.5" and rows[0]["n"] == "400"
    assert float(rows[0]["relative_deviation"]) < 0.02
    assert (tmp_path / "r.svg").stat().st_size > 0


def test_validate_binomial_granularity_warning(tmp_path, capsys):
    assert main(["validate-binomial", "--rows", "5", "--cols", "5", "--train", "10",
                 "--test", "5", "--z", "0.999", "--split-seeds", "0",
                 "-o", str(tmp_path / "r.csv")]) == 0
    assert "QuantileGranularityWarning" in capsys.readouterr().err


def test_global_options_after_subcommand(tmp_path):
    _save(tmp_path / "a.spec", [[1.0]])
    assert main(["fit", str(tmp_path / "a.spec"), "-o", str(tmp_path / "r.qref"),
                 "--jobs", "1", "-v"]) == 0


def test_config_file_drives_preprocessing(tmp_path):
    (tmp_path / "cfg.json").write_text(json.dumps({"stft": {"n_fft": 64}, "sample_rate": 8000}))
    (tmp_path / "a.wav").write_bytes(encode_wav([np.zeros(640)], 8000))
    assert main(["--config", str(tmp_path / "cfg.json"), "spectrogram", str(tmp_path / "a.wav"),
                 "-o", str(tmp_path / "a.spec")]) == 0
    assert Spectrogram.load(tmp_path / "a.spec").shape == (33, 41)
