import numpy as np
import pytest

from strokesig.cli import main
from strokesig.features import read_feature_csv
from strokesig.neuralnet import load_model
from strokesig.signal_io import load_cohort


@pytest.fixture(scope="module")
def tiny_cohort_path(tmp_path_factory):
    """4 subjects at 90 s keeps every CLI test fast."""
    path = tmp_path_factory.mktemp("cli") / "cohort.ssig"
    code = main([
        "synth", "--normals", "2", "--strokes", "2", "--seed", "1",
        "--duration", "90", "--out", str(path),
    ])
    assert code == 0
    return path


@pytest.fixture(scope="module")
def tiny_features_path(tiny_cohort_path, tmp_path_factory):
    path = tmp_path_factory.mktemp("cli") / "features.csv"
    code = main(["features", "--cohort", str(tiny_cohort_path), "--out", str(path)])
    assert code == 0
    return path


def test_synth_writes_expected_cohort(tiny_cohort_path):
    cohort = load_cohort(tiny_cohort_path)
    assert len(cohort) == 4
    assert sorted({int(r.label) for r in cohort.recordings}) == [0, 1]


def test_features_csv_has_4_rows_26_columns(tiny_features_path):
    lines = tiny_features_path.read_text().splitlines()
    assert len(lines) == 5  # header + 4 subjects
    assert all(len(line.split(",")) == 26 for line in lines)
    rows = read_feature_csv(tiny_features_path)
    assert len(rows) == 4


def test_features_bsi_output(tiny_cohort_path, tmp_path):
    f = tmp_path / "f.csv"
    b = tmp_path / "bsi.csv"
    code = main([
        "features", "--cohort", str(tiny_cohort_path),
        "--out", str(f), "--bsi-out", str(b),
    ])
    assert code == 0
    lines = b.read_text().splitlines()
    assert lines[0] == "subject_id,label,bsi"
    assert len(lines) == 5
    values = [float(line.split(",")[2]) for line in lines[1:]]
    assert all(v >= 0 for v in values)


def test_train_saves_loadable_model(tiny_features_path, tmp_path):
    out = tmp_path / "model.ssnn"
    code = main([
        "train", "--features", str(tiny_features_path), "--model", "cnn",
        "--epochs", "2", "--batch-size", "2", "--seed", "3", "--out", str(out),
    ])
    assert code == 0
    net = load_model(out)
    probs = net.predict_proba(np.zeros(24))
    assert probs.sum() == pytest.approx(1.0, abs=1e-9)


def test_loo_csv_report(tiny_features_path, tmp_path):
    out = tmp_path / "report.csv"
    code = main([
        "loo", "--features", str(tiny_features_path), "--classifier", "gnb",
        "--repetitions", "2", "--seeds", "1,2", "--out", str(out),
    ])
    assert code == 0
    rows = out.read_text().splitlines()
    assert len(rows) == 4  # header + 2 reps + mean
    assert rows[-1].startswith("mean,")


def test_loo_rerun_is_byte_identical(tiny_features_path, tmp_path):
    args = [
        "loo", "--features", str(tiny_features_path), "--classifier", "cnn",
        "--epochs", "2", "--batch-size", "2", "--repetitions", "2",
        "--seeds", "5,6",
    ]
    a = tmp_path / "a.csv"
    b = tmp_path / "b.csv"
    assert main(args + ["--out", str(a)]) == 0
    assert main(args + ["--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()


def test_loo_respects_jobs_env(tiny_features_path, tmp_path, monkeypatch):
    monkeypatch.setenv("STROKESIG_JOBS", "2")
    out = tmp_path / "r.csv"
    code = main([
        "loo", "--features", str(tiny_features_path), "--classifier", "gnb",
        "--seeds", "1", "--repetitions", "1", "--out", str(out),
    ])
    assert code == 0
    assert out.exists()


def test_report_renders_jsonl_to_text(tiny_features_path, tmp_path):
    jsonl = tmp_path / "r.jsonl"
    code = main([
        "loo", "--features", str(tiny_features_path), "--classifier", "gnb",
        "--seeds", "1,2", "--format", "json-lines", "--out", str(jsonl),
    ])
    assert code == 0
    out = tmp_path / "r.txt"
    code = main(["report", "--in", str(jsonl), "--format", "text", "--out", str(out)])
    assert code == 0
    assert "classifier: gnb" in out.read_text()


def test_baseline_prints_metrics(tiny_features_path, capsys):
    code = main(["baseline", "--features", str(tiny_features_path), "--model", "gnb"])
    assert code == 0
    captured = capsys.readouterr()
    assert "accuracy" in captured.out


def test_unknown_flag_exits_2(tiny_features_path):
    assert main(["loo", "--features", str(tiny_features_path), "--bogus"]) == 2


def test_unknown_command_exits_2():
    assert main(["frobnicate"]) == 2


def test_missing_file_is_domain_error(tmp_path):
    code = main(["features", "--cohort", str(tmp_path / "nope.ssig"), "--out", str(tmp_path / "f.csv")])
    assert code == 1


def test_config_echo_goes_to_stderr(tiny_cohort_path, tmp_path, capsys):
    main(["features", "--cohort", str(tiny_cohort_path), "--out", str(tmp_path / "f.csv")])
    captured = capsys.readouterr()
    assert "config: features" in captured.err
    assert captured.out == ""
