import json
import re

import numpy as np
import pytest

from conftest import FIXTURE_DIR, run_cli

import mvncd.cli
from mvncd.dataset import load_dataset
from mvncd.solver import FitResult

REPORT_KEYS = {
    "schema_version", "tool_version", "seed", "dataset", "config",
    "metrics", "alpha", "objective_trace", "iterations", "converged",
    "wall_time",
}
DATASET_KEYS = {
    "num_samples", "num_labeled", "num_unlabeled", "num_views", "view_dims",
    "num_known_classes", "num_novel_classes",
}


def run_fixture(out_dir, *extra):
    return run_cli(["run", "--data", str(FIXTURE_DIR), "--out", str(out_dir),
                    *extra])


def strip_wall_time(text):
    return re.sub(r'"wall_time": [^,\n]+', '"wall_time": 0', text)


# --- run ---

def test_run_on_bundled_fixture(tmp_path):
    code, stdout, _ = run_fixture(tmp_path)
    assert code == 0
    report = json.loads((tmp_path / "report.json").read_text())
    assert set(report) == REPORT_KEYS
    assert set(report["dataset"]) == DATASET_KEYS
    assert set(report["metrics"]) == {"acc", "nmi", "purity"}
    assert report["metrics"]["acc"] >= 0.95
    assert report["converged"] is True
    assert report["iterations"] < 50
    assert all(0.0 <= report["metrics"][m] <= 1.0 for m in report["metrics"])
    assert "acc=" in stdout

    trace = (tmp_path / "trace.csv").read_text().splitlines()
    assert trace[0] == "iter,objective,alpha_0,alpha_1"
    assert len(trace) == len(report["objective_trace"]) + 1

    assignment = (tmp_path / "assignment.csv").read_text().splitlines()
    assert len(assignment) == report["dataset"]["num_unlabeled"]


def test_run_deterministic_reports(tmp_path):
    run_fixture(tmp_path / "a", "--seed", "3")
    run_fixture(tmp_path / "b", "--seed", "3")
    a = strip_wall_time((tmp_path / "a" / "report.json").read_text())
    b = strip_wall_time((tmp_path / "b" / "report.json").read_text())
    assert a == b
    assert (tmp_path / "a" / "trace.csv").read_bytes() == \
        (tmp_path / "b" / "trace.csv").read_bytes()


def test_run_lambda1_zero_does_not_beat_default(tmp_path):
    _, _, _ = run_fixture(tmp_path / "default")
    run_fixture(tmp_path / "nosup", "--lambda1", "0")
    acc = json.loads((tmp_path / "default" / "report.json").read_text())["metrics"]["acc"]
    acc0 = json.loads((tmp_path / "nosup" / "report.json").read_text())["metrics"]["acc"]
    assert acc0 <= acc


def test_run_bad_data_path(tmp_path):
    code, _, stderr = run_cli(["run", "--data", str(tmp_path / "missing"),
                               "--out", str(tmp_path / "out")])
    assert code == 2
    assert "error" in stderr
    assert not (tmp_path / "out" / "report.json").exists()


def test_run_invalid_lambda(tmp_path):
    code, _, stderr = run_fixture(tmp_path, "--lambda1", "-2")
    assert code == 2
    assert "error" in stderr


def test_run_refuses_non_monotone_trace(tmp_path, monkeypatch):
    real_fit = mvncd.cli.fit

    def doctored(ds, cfg):
        result = real_fit(ds, cfg)
        trace = list(result.objective_trace) + [result.objective_trace[-1] + 1.0]
        return FitResult(
            novel_assignment=result.novel_assignment,
            objective_trace=trace,
            alpha_trace=result.alpha_trace + [result.alpha_trace[-1]],
            iterations=result.iterations + 1,
            converged=result.converged,
            wall_time=result.wall_time,
            state=result.state,
        )

    monkeypatch.setattr(mvncd.cli, "fit", doctored)
    code, _, stderr = run_fixture(tmp_path)
    assert code == 3
    assert "monoton" in stderr
    assert not (tmp_path / "report.json").exists()


def test_cli_no_command():
    code, stdout, _ = run_cli([])
    assert code == 2
    assert "usage" in stdout


# --- synth ---

def test_synth_deterministic(tmp_path):
    args = ["synth", "--seed", "7", "--views", "2", "--classes", "4",
            "--per-class", "5", "--dims", "5,6"]
    run_cli(args + ["--out", str(tmp_path / "a")])
    run_cli(args + ["--out", str(tmp_path / "b")])
    for name in ("view_0.csv", "view_1.csv", "labels.csv", "manifest.json"):
        assert (tmp_path / "a" / name).read_bytes() == \
            (tmp_path / "b" / name).read_bytes()


def test_synth_odd_class_split(tmp_path):
    code, _, _ = run_cli(["synth", "--classes", "7", "--per-class", "4",
                          "--dims", "8", "--out", str(tmp_path)])
    assert code == 0
    ds = load_dataset(tmp_path)
    assert ds.num_known == 3 and ds.num_novel == 4


def test_synth_round_trip_runs(tmp_path):
    run_cli(["synth", "--seed", "1", "--classes", "4", "--per-class", "10",
             "--dims", "6,6", "--separation", "9", "--noise", "0.5",
             "--out", str(tmp_path / "data")])
    code, _, _ = run_cli(["run", "--data", str(tmp_path / "data"),
                          "--out", str(tmp_path / "out")])
    assert code == 0
    report = json.loads((tmp_path / "out" / "report.json").read_text())
    assert report["dataset"]["num_views"] == 2


# --- sweep ---

def test_sweep_default_grid(tmp_path):
    code, _, _ = run_cli(["sweep", "--data", str(FIXTURE_DIR),
                          "--out", str(tmp_path)])
    assert code == 0
    rows = (tmp_path / "summary.csv").read_text().splitlines()
    assert rows[0] == "lambda1,lambda2,acc,nmi,purity,status"
    assert len(rows) == 37  # 6 x 6 grid
    accs = [float(r.split(",")[2]) for r in rows[1:]]
    assert max(accs) - min(accs) <= 0.05
    reports = list(tmp_path.glob("run_l1_*.json"))
    assert len(reports) == 36


def test_sweep_single_cell_matches_run(tmp_path):
    run_cli(["sweep", "--data", str(FIXTURE_DIR), "--lambda1-grid", "1",
             "--lambda2-grid", "1", "--out", str(tmp_path / "sweep")])
    run_cli(["run", "--data", str(FIXTURE_DIR), "--lambda1", "1",
             "--lambda2", "1", "--out", str(tmp_path / "run")])
    cell = json.loads((tmp_path / "sweep" / "run_l1_1_l2_1.json").read_text())
    single = json.loads((tmp_path / "run" / "report.json").read_text())
    assert cell["metrics"] == single["metrics"]
    assert cell["objective_trace"] == single["objective_trace"]


def test_sweep_parallel_matches_serial(tmp_path):
    grid = ["--lambda1-grid", "1,10", "--lambda2-grid", "1,10"]
    run_cli(["sweep", "--data", str(FIXTURE_DIR), *grid,
             "--out", str(tmp_path / "serial")])
    run_cli(["sweep", "--data", str(FIXTURE_DIR), *grid, "--jobs", "4",
             "--out", str(tmp_path / "parallel")])
    assert (tmp_path / "serial" / "summary.csv").read_bytes() == \
        (tmp_path / "parallel" / "summary.csv").read_bytes()


def test_sweep_records_cell_failure_and_continues(tmp_path):
    code, _, stderr = run_cli(["sweep", "--data", str(FIXTURE_DIR),
                               "--lambda1-grid=-1,1", "--lambda2-grid", "1",
                               "--out", str(tmp_path)])
    assert code == 0
    rows = (tmp_path / "summary.csv").read_text().splitlines()
    assert len(rows) == 3
    assert "error" in rows[1] and rows[1].startswith("-1,1,,,,")
    ok_row = rows[2].split(",")
    assert ok_row[0] == "1" and ok_row[-1] == "ok"
    assert "lambda1=-1" in stderr


# --- eval ---

def test_eval_rescores_solver_output(tmp_path):
    run_fixture(tmp_path)
    report = json.loads((tmp_path / "report.json").read_text())
    code, stdout, _ = run_cli(["eval", "--data", str(FIXTURE_DIR),
                               "--assignment", str(tmp_path / "assignment.csv")])
    assert code == 0
    assert json.loads(stdout) == report["metrics"]


def test_eval_truth_scores_perfect(tmp_path):
    ds = load_dataset(FIXTURE_DIR)
    truth = ds.labels[ds.unlabeled_indices]
    path = tmp_path / "truth.csv"
    path.write_text("".join(f"{c}\n" for c in truth))
    code, stdout, _ = run_cli(["eval", "--data", str(FIXTURE_DIR),
                               "--assignment", str(path)])
    assert code == 0
    assert json.loads(stdout) == {"acc": 1.0, "nmi": 1.0, "purity": 1.0}


def test_eval_shuffled_assignment_near_chance(tmp_path):
    ds = load_dataset(FIXTURE_DIR)
    truth = ds.labels[ds.unlabeled_indices]
    shuffled = truth.copy()
    np.random.default_rng(0).shuffle(shuffled)
    path = tmp_path / "shuffled.csv"
    path.write_text("".join(f"{c}\n" for c in shuffled))
    _, stdout, _ = run_cli(["eval", "--data", str(FIXTURE_DIR),
                            "--assignment", str(path)])
    acc = json.loads(stdout)["acc"]
    assert 0.5 <= acc <= 0.75  # two balanced novel classes


def test_eval_rejects_bad_assignment(tmp_path):
    short = tmp_path / "short.csv"
    short.write_text("0\n1\n")
    code, _, stderr = run_cli(["eval", "--data", str(FIXTURE_DIR),
                               "--assignment", str(short)])
    assert code == 2 and "error" in stderr

    frac = tmp_path / "frac.csv"
    frac.write_text("".join("0.5\n" for _ in range(60)))
    code, _, _ = run_cli(["eval", "--data", str(FIXTURE_DIR),
                          "--assignment", str(frac)])
    assert code == 2

    code, _, _ = run_cli(["eval", "--data", str(FIXTURE_DIR),
                          "--assignment", str(tmp_path / "missing.csv")])
    assert code == 2


# --- verify ---

def test_verify_subcommand_passes():
    code, stdout, _ = run_cli(["verify"])
    assert code == 0
    assert "all 6 checks passed" in stdout
    assert "FAIL" not in stdout
