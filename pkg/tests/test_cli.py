import json
import os
import subprocess
import sys
import time

import numpy as np
import pytest

from nucomplete import matcore
from nucomplete.cli import main
from nucomplete.config import ExperimentConfig, parse_config_text
from nucomplete.errors import ConfigurationError
from nucomplete.sampling import ObservationSet

TINY = """
dataset.kind = synthetic
dataset.d = 6
dataset.rank_b = 2
dataset.rank_p = 2
dataset.n = 300
methods = uniform
solver.n_lambdas = 6
plan.n_repeats = 1
"""


def write_cfg(tmp_path, text, name="run.cfg"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def run(tmp_path, command, text, *extra, out="out"):
    cfg = write_cfg(tmp_path, text)
    code = main([command, "--config", cfg, "--output-dir", str(tmp_path / out), *extra])
    return code, tmp_path / out


def test_config_parsing_and_defaults():
    v = parse_config_text("dataset.n = 10, 20  # two sizes\nmethods = margin\n")
    assert v["dataset.n"] == [10, 20] and v["methods"] == ["margin"]
    assert v["weights.l_bound"] == 3.0 and v["weights.gamma"] == 3.0
    cfg = ExperimentConfig.from_text("solver.lambdas = 1.0, 0.5\n")
    assert cfg.solver_config().lambdas == [1.0, 0.5]
    assert [s.method for s in cfg.estimator_specs()] == ["uniform", "margin", "ipw_uniform", "nu_recommend"]


@pytest.mark.parametrize("text", [
    "dataset.bogus = 1\n",
    "dataset.d = ten\n",
    "no equals sign\n",
    "methods = uniform, softimpute\n",
    "dataset.kind = movielens\n",
    "solver.lambdas = 1.0, 2.0\n",
    "plan.eval_fraction = 1.5\n",
    "parallelism = 0\n",
])
def test_config_rejections(text):
    with pytest.raises(ConfigurationError):
        ExperimentConfig.from_text(text)


def test_generate_deterministic_and_fast(tmp_path):
    text = TINY.replace("dataset.d = 6", "dataset.d = 4").replace("dataset.n = 300", "dataset.n = 10")
    start = time.perf_counter()
    code, out = run(tmp_path, "generate", text, out="a")
    assert code == 0 and time.perf_counter() - start < 1.0
    code, out2 = run(tmp_path, "generate", text, out="b")
    for name in ("b_star.csv", "p_star.csv", "observations_n10.csv", "manifest.json"):
        assert (out / name).read_bytes() == (out2 / name).read_bytes()
    assert matcore.load_csv(out / "p_star.csv").sum() == pytest.approx(1, abs=1e-9)
    obs = ObservationSet.from_csv((out / "observations_n10.csv").read_text(), shape=(4, 4))
    assert len(obs) == 10


def test_seed_flag_changes_data(tmp_path):
    _, a = run(tmp_path, "generate", TINY, out="a")
    _, b = run(tmp_path, "generate", TINY, "--seed", "5", out="b")
    assert (a / "b_star.csv").read_bytes() != (b / "b_star.csv").read_bytes()


def test_single_method_single_repeat_report(tmp_path):
    code, out = run(tmp_path, "experiment", TINY)
    assert code == 0
    rows = (out / "report.csv").read_text().splitlines()
    assert rows[0] == "method,n,repeat,lambda,rel_frobenius,rel_l2pi" and len(rows) == 2
    manifest = json.loads((out / "manifest.json").read_text())["files"]
    assert {"report.csv", "summary.json", "plot_data.csv", "fairness.json"} <= set(manifest)
    assert not (out / "failures.json").exists()


def test_sample_size_sweep_has_six_points(tmp_path):
    text = TINY.replace("dataset.n = 300", "dataset.n = 50, 60, 70, 80, 90, 100") + "methods = uniform, margin\n"
    code, out = run(tmp_path, "experiment", text)
    assert code == 0
    plot = [line.split(",") for line in (out / "plot_data.csv").read_text().splitlines()[1:]]
    for m in ("uniform", "margin"):
        xs = {row[1] for row in plot if row[0] == m and row[2] == "rel_frobenius"}
        assert xs == {"50", "60", "70", "80", "90", "100"}


def test_parallel_runs_are_identical(tmp_path):
    text = TINY + "plan.n_repeats = 3\nmethods = uniform, margin\n"
    run(tmp_path, "experiment", text, "--parallelism", "1", out="p1")
    run(tmp_path, "experiment", text, "--parallelism", "2", out="p2")
    for name in ("report.csv", "summary.json", "plot_data.csv", "fairness.json", "manifest.json"):
        assert (tmp_path / "p1" / name).read_bytes() == (tmp_path / "p2" / name).read_bytes()


def test_fairness_replay_matches(tmp_path):
    text = TINY.replace("dataset.d = 6", "dataset.d = 8") + "plan.n_repeats = 2\n"
    run(tmp_path, "experiment", text)
    code, out = run(tmp_path, "fairness", text)
    assert code == 0
    in_run = json.loads((out / "fairness.json").read_text())
    replay = json.loads((out / "fairness_replay.json").read_text())
    assert set(in_run) == set(replay)
    for cell, axes in in_run.items():
        for axis in ("rows", "cols"):
            for key in ("slope", "intercept", "p_value"):
                assert replay[cell][axis][key] == pytest.approx(axes[axis][key], abs=1e-12)


def test_fairness_too_few_rows_is_structured(tmp_path):
    text = TINY.replace("dataset.d = 6", "dataset.d = 2").replace("dataset.rank_b = 2", "dataset.rank_b = 1") \
        .replace("dataset.rank_p = 2", "dataset.rank_p = 1")
    code, out = run(tmp_path, "experiment", text)
    assert code == 0
    [cell] = json.loads((out / "fairness.json").read_text()).values()
    assert cell["rows"]["error"] == "InsufficientDataError"
    assert run(tmp_path, "fairness", text)[0] == 1


def test_fairness_without_predictions(tmp_path):
    assert run(tmp_path, "fairness", TINY, out="empty")[0] == 2


def test_failing_cell_is_recorded(tmp_path):
    text = TINY + "methods = uniform, nu_recommend\ndataset.noise_sd = 0.05\nweights.gamma = 1e-9\n"
    code, out = run(tmp_path, "experiment", text)
    assert code == 1
    fails = json.loads((out / "failures.json").read_text())
    assert list(fails) == ["nu_recommend_n300_r000"] and "InfeasibleError" in fails["nu_recommend_n300_r000"]["error"]
    assert len((out / "report.csv").read_text().splitlines()) == 2


def test_bad_config_exit_code(tmp_path):
    assert run(tmp_path, "experiment", "dataset.bogus = 1\n")[0] == 2
    assert run(tmp_path, "experiment", "dataset.kind = observations\ndataset.path = /nonexistent.csv\n")[0] == 1


def test_single_fit_commands(tmp_path):
    text = TINY + "methods = margin\n"
    code, out = run(tmp_path, "estimate-sampling", text, out="s")
    assert code == 0 and matcore.load_csv(out / "p_hat.csv").sum() == pytest.approx(1)
    code, out = run(tmp_path, "construct-weights", text + "weights.gamma = 100\n", out="w")
    assert code == 0
    w = matcore.load_csv(out / "weights.csv")
    assert np.all(w > 0) and w.sum() == pytest.approx(1)
    assert set(json.loads((out / "diagnostics.json").read_text())) == {"nu_recommend", "margin"}
    code, out = run(tmp_path, "fit", text, out="f")
    assert code == 0
    meta = json.loads((out / "margin" / "lambda_000.json").read_text())
    assert meta["converged"] and np.all(matcore.load_csv(out / "margin" / "lambda_000.csv") == 0)


def real_obs(tmp_path, lab=False):
    rng = np.random.default_rng(0)
    d, n = 8, 240
    b = rng.random((d, 2)) @ rng.random((2, d))
    rows, cols = rng.integers(0, d, n), rng.integers(0, d, n)
    vals = b[rows, cols] + 0.1 * rng.standard_normal(n)
    if lab:
        vals = np.exp(vals)
    path = tmp_path / "obs.csv"
    path.write_text(ObservationSet(d, d, rows, cols, vals).to_csv())
    return path


@pytest.mark.parametrize("kind", ["observations", "labstyle"])
def test_real_data_experiment_and_replay(tmp_path, kind):
    path = real_obs(tmp_path, lab=kind == "labstyle")
    text = f"dataset.kind = {kind}\ndataset.path = {path}\nmethods = uniform, margin\n" \
           "solver.n_lambdas = 4\nplan.n_repeats = 2\n"
    code, out = run(tmp_path, "experiment", text)
    assert code == 0
    rows = (out / "report.csv").read_text().splitlines()
    assert rows[0] == "method,repeat,lambda,test_rmse" and len(rows) == 5
    summary = json.loads((out / "summary.json").read_text())
    assert set(summary) == {"uniform", "margin"} and "two_se" in summary["uniform"]
    assert run(tmp_path, "fairness", text)[0] == 0
    in_run = json.loads((out / "fairness.json").read_text())
    replay = json.loads((out / "fairness_replay.json").read_text())
    for cell in in_run:
        assert replay[cell]["rows"]["slope"] == pytest.approx(in_run[cell]["rows"]["slope"], abs=1e-12)


def test_movielens_kind(tmp_path):
    rng = np.random.default_rng(1)
    lines = [f"{u}\t{i}\t{rng.integers(1, 6)}\t88125{k:04d}"
             for k, (u, i) in enumerate((u, i) for u in range(1, 13) for i in range(1, 11) if rng.random() < 0.8)]
    path = tmp_path / "u.data"
    path.write_text("\n".join(lines) + "\n")
    text = f"dataset.kind = movielens\ndataset.path = {path}\ndataset.user_quantile = 0\n" \
           "dataset.item_quantile = 0\nmethods = uniform\nsolver.n_lambdas = 3\nplan.n_repeats = 1\n"
    code, out = run(tmp_path, "experiment", text)
    assert code == 0


def test_module_entry_point(tmp_path):
    cfg = write_cfg(tmp_path, TINY)
    proc = subprocess.run([sys.executable, "-m", "nucomplete", "generate", "--config", cfg,
                           "--output-dir", str(tmp_path / "m")], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert (tmp_path / "m" / "b_star.csv").exists()


def test_log_level_from_environment(tmp_path):
    cfg = write_cfg(tmp_path, TINY + "sampling.method = pmlsvt\n")
    argv = [sys.executable, "-m", "nucomplete", "estimate-sampling", "--config", cfg,
            "--output-dir", str(tmp_path / "s")]
    quiet = subprocess.run(argv, capture_output=True, text=True)
    loud = subprocess.run(argv, capture_output=True, text=True, env={**os.environ, "NUCOMPLETE_LOG": "INFO"})
    assert quiet.returncode == loud.returncode == 0
    assert "pmlsvt" not in quiet.stderr and "INFO" in loud.stderr
