import csv
import json

import numpy as np
import pytest

from dosk import bench
from dosk.cli import build_parser, main
from dosk.exceptions import SolverError
from dosk.kernel import KernelSpec, gram_matrix
from dosk.model import decision_values, load_model
from dosk.simdata import Dataset, apply_ranges, column_ranges, gen_classification, write_csv

SMALL_GRID = ["--lambda1-grid", "0", "--lambda2-grid", "1", "--gamma-grid", "0.5", "--folds", "2"]


@pytest.fixture
def reg_csv(tmp_path):
    rng = np.random.default_rng(0)
    X = rng.uniform(-1, 1, size=(30, 2))
    y = np.sin(3 * X[:, 0]) + 0.1 * rng.normal(size=30)
    return write_csv(Dataset(X, y), tmp_path / "reg.csv"), X, y


def run(argv, capsys):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def test_null_model_on_toy_data(tmp_path, capsys):
    path = tmp_path / "toy.csv"
    path.write_text("a,b,y\n0,1,1.5\n1,0,-0.5\n2,2,0.3\n3,1,2.0\n4,0,-1.0\n")
    code, out, _ = run(["fit", "--data", path, "--label", "y", "--lambda1", "1e6", "--lambda2", "1e6",
                        "--out", tmp_path / "m.json"], capsys)
    assert code == 0
    report = json.loads(out)
    assert report["n_support_points"] == 0
    assert report["n_selected_vars"] == 0
    assert {"objective", "iterations", "converged"} <= set(report)


def test_frozen_ridge_objective_matches_oracle(reg_csv, tmp_path, capsys):
    path, X, y = reg_csv
    code, out, _ = run(["fit", "--data", path, "--label", "y", "--gamma", "2", "--lambda3", "0.5", "--freeze-w",
                        "--out", tmp_path / "m.json"], capsys)
    assert code == 0
    n = len(y)
    K = gram_matrix(KernelSpec("gaussian", gamma=2.0), np.ones(2), apply_ranges(X, column_ranges(X)))
    lam3 = 0.5 / n
    M = np.zeros((n + 1, n + 1))
    M[:n, :n] = K + n * lam3 * np.eye(n)
    M[:n, n] = 1.0
    M[n, :n] = K.sum(axis=0)
    M[n, n] = n
    sol = np.linalg.solve(M, np.r_[y, y.sum()])
    alpha, b = sol[:n], sol[n]
    f = K @ alpha + b
    oracle = np.mean((y - f) ** 2) + lam3 * alpha @ K @ alpha
    assert json.loads(out)["objective"] == pytest.approx(oracle, rel=1e-6)


def test_missing_label(reg_csv, tmp_path, capsys):
    path, _, _ = reg_csv
    code, _, err = run(["fit", "--data", path, "--out", tmp_path / "m.json"], capsys)
    assert code == 2
    assert "label column not found" in err
    code, _, err = run(["fit", "--data", path, "--label", "nope", "--out", tmp_path / "m.json"], capsys)
    assert code == 2
    assert "label column not found" in err


def test_bad_class_labels_exit_2(reg_csv, tmp_path, capsys):
    path, _, _ = reg_csv
    code, _, _ = run(["fit", "--data", path, "--label", "y", "--task", "class", "--out", tmp_path / "m.json"],
                     capsys)
    assert code == 2


def test_usage_error_exits_2(capsys):
    with pytest.raises(SystemExit) as info:
        main(["fit", "--gamma", "wide"])
    assert info.value.code == 2


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_solver_failure_exits_3(tmp_path, capsys):
    path = tmp_path / "big.csv"
    path.write_text("a,y\n1000,1\n2000,2\n3000,3\n")
    code, _, err = run(["fit", "--data", path, "--label", "y", "--kernel", "poly", "--degree", "400",
                        "--coef0", "10", "--no-standardize", "--out", tmp_path / "m.json"], capsys)
    assert code == 3
    assert "solver error" in err


def test_predict_round_trip(reg_csv, tmp_path, capsys):
    path, X, _ = reg_csv
    model_path = tmp_path / "m.json"
    run(["fit", "--data", path, "--label", "y", "--lambda1", "0.1", "--lambda2", "0.1", "--out", model_path,
         "--report", tmp_path / "r.json"], capsys)
    code, out, _ = run(["predict", "--model", model_path, "--data", path, "--label", "y"], capsys)
    assert code == 0
    rows = list(csv.reader(out.splitlines()))
    assert rows[0] == ["prediction"]
    got = np.array([float(r[0]) for r in rows[1:]])
    assert np.array_equal(got, decision_values(load_model(model_path), X))


def test_predict_classifier_writes_labels(tmp_path, capsys):
    d = gen_classification(40, signal_dim=2, p0=1, seed=0)
    path = write_csv(d, tmp_path / "c.csv")
    model_path = tmp_path / "m.json"
    code, _, _ = run(["fit", "--data", path, "--label", "y", "--task", "class", "--gamma", "0.5",
                      "--out", model_path, "--report", tmp_path / "r.json"], capsys)
    assert code == 0
    features = tmp_path / "x.csv"
    lines = ["x1,x2,x3"] + [",".join(repr(float(v)) for v in row) for row in d.X]
    features.write_text("\n".join(lines) + "\n")
    code, out, _ = run(["predict", "--model", model_path, "--data", features], capsys)
    assert code == 0
    rows = list(csv.reader(out.splitlines()))
    assert rows[0] == ["decision", "label"]
    for decision, label in rows[1:]:
        assert int(label) == (1 if float(decision) >= 0 else -1)


def test_predict_rejects_corrupt_model(reg_csv, tmp_path, capsys):
    path, _, _ = reg_csv
    bad = tmp_path / "bad.json"
    bad.write_text("{\"format_version\": 1")
    code, _, _ = run(["predict", "--model", bad, "--data", path, "--label", "y"], capsys)
    assert code == 2


def test_tune_single_cell(reg_csv, tmp_path, capsys):
    path, _, _ = reg_csv
    table = tmp_path / "t.csv"
    code, out, _ = run(["tune", "--data", path, "--label", "y", *SMALL_GRID, "--table", table], capsys)
    assert code == 0
    best = json.loads(out)
    assert (best["lambda1"], best["lambda2"], best["gamma"]) == (0.0, 1.0, 0.5)
    rows = list(csv.reader(table.read_text().splitlines()))
    assert rows[0] == ["lambda1", "lambda2", "lambda3", "gamma", "cv_error", "fold1", "fold2"]
    assert len(rows) == 2


def test_tune_default_grid_is_deterministic(reg_csv, tmp_path, capsys):
    path, _, _ = reg_csv
    t1, t2 = tmp_path / "t1.csv", tmp_path / "t2.csv"
    for t in (t1, t2):
        code, _, _ = run(["tune", "--data", path, "--label", "y", "--folds", "2", "--seed", "4", "--table", t],
                         capsys)
        assert code == 0
    assert len(t1.read_text().splitlines()) == 211
    assert t1.read_bytes() == t2.read_bytes()


def test_tune_degenerate_folds_exit_2(tmp_path, capsys):
    path = tmp_path / "c.csv"
    path.write_text("a,y\n" + "".join(f"{i},1\n" for i in range(8)) + "9,-1\n")
    code, _, _ = run(["tune", "--data", path, "--label", "y", "--task", "class", *SMALL_GRID], capsys)
    assert code == 2


def bench_args(out, *extra):
    return ["bench", "--design", "reg1", "--n", "20", "--p0", "1", *SMALL_GRID, "--out", out, *extra]


def test_bench_single_replicate_reports_zero_std(tmp_path, capsys):
    out = tmp_path / "b.json"
    code, _, _ = run(bench_args(out, "--replicates", "1"), capsys)
    assert code == 0
    report = json.loads(out.read_text())
    assert report["replicates"] == len(report["rows"]) == 1
    assert report["n_test"] == 200
    assert all(s["std"] == 0.0 for s in report["summary"].values())
    assert "wall_clock_seconds" not in report


def test_bench_is_byte_identical_across_runs(tmp_path, capsys):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    run(bench_args(a, "--replicates", "2", "--seed", "7"), capsys)
    run(bench_args(b, "--replicates", "2", "--seed", "7"), capsys)
    assert a.read_bytes() == b.read_bytes()


def test_bench_replicates_reproduce_independently(tmp_path, capsys):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    run(bench_args(a, "--replicates", "2", "--seed", "4"), capsys)
    run(bench_args(b, "--replicates", "1", "--seed", "5"), capsys)
    assert json.loads(a.read_text())["rows"][1] == json.loads(b.read_text())["rows"][0]


def test_bench_plot_data_flags_support_points(tmp_path, capsys):
    out, plot = tmp_path / "b.json", tmp_path / "plot.csv"
    code, _, err = run(bench_args(out, "--replicates", "1", "--plot-data", plot, "--pretty", "--timing"), capsys)
    assert code == 0
    assert "test_error" in err
    report = json.loads(out.read_text())
    assert report["wall_clock_seconds"] > 0
    rows = list(csv.DictReader(plot.read_text().splitlines()))
    assert len(rows) == 20
    assert sum(int(r["is_support"]) for r in rows) == report["rows"][0]["n_support_points"]


def test_plot_support_flags_match_model(monkeypatch):
    captured = {}
    original = bench.build_model

    def spy(*args, **kwargs):
        model = original(*args, **kwargs)
        captured.setdefault("model", model)
        return model

    monkeypatch.setattr(bench, "build_model", spy)
    grid = bench.CvGrid((0.0,), (1.0,), (0.5,), folds=2)
    _, plot = bench.run_replicate("reg1", 20, 1, 3, grid, baseline=False)
    flagged = set(np.flatnonzero(plot["is_support"]).tolist())
    assert flagged == {sp.index for sp in captured["model"].support_points}


def test_bench_failure_exits_3_with_partial_report(tmp_path, capsys, monkeypatch):
    original = bench.run_replicate

    def flaky(design, n, p0, seed, *args, **kwargs):
        if seed == 1:
            raise SolverError("objective became non-finite")
        return original(design, n, p0, seed, *args, **kwargs)

    monkeypatch.setattr(bench, "run_replicate", flaky)
    out = tmp_path / "b.json"
    code, _, _ = run(bench_args(out, "--replicates", "2", "--seed", "0"), capsys)
    assert code == 3
    rows = json.loads(out.read_text())["rows"]
    assert "error" not in rows[0]
    assert rows[1]["seed"] == 1 and "SolverError" in rows[1]["error"]


def test_jobs_default_from_environment(monkeypatch):
    monkeypatch.setenv("DOSK_JOBS", "3")
    assert build_parser().parse_args(["bench", "--design", "reg1"]).jobs == 3
    monkeypatch.delenv("DOSK_JOBS")
    assert build_parser().parse_args(["bench", "--design", "reg1"]).jobs == 1


def test_bench_defaults():
    args = build_parser().parse_args(["bench", "--design", "class2"])
    assert (args.replicates, args.lambda3, args.folds, args.penalty_scale) == (50, 0.5, 5, "sum")
