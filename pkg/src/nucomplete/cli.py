"""Command-line entry point: data generation, single fits and replicated experiments.

Usage::

    python -m nucomplete <subcommand> --config run.cfg [--seed S] [--parallelism P] [--output-dir DIR]

Subcommands: ``generate``, ``estimate-sampling``, ``construct-weights``,
``fit``, ``experiment``, ``fairness``.  ``NUCOMPLETE_LOG`` sets the log level.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
import traceback
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import dataio, matcore, sampling
from .config import ExperimentConfig
from .errors import NucompleteError
from .estimators import estimate_sampling, margin_weights, nu_recommend_weights, raw_estimate, run_estimator
from .evaluation import (
    ExperimentReport,
    RepeatRecord,
    cv_repeat,
    fairness_regression,
    relative_frobenius,
    relative_l2pi,
)
from .sampling import ObservationSet
from .weights import bound_diagnostics

log = logging.getLogger("nucomplete")


# ---------------------------------------------------------------- datasets

def synthetic_spec(cfg: ExperimentConfig, n: int, repeat: int) -> dataio.SyntheticSpec:
    return dataio.SyntheticSpec(d=cfg["dataset.d"], rank_b=cfg["dataset.rank_b"], rank_p=cfg["dataset.rank_p"],
                                noise_sd=cfg["dataset.noise_sd"], n=n, seed=cfg["dataset.seed"] + repeat)


def load_observations(cfg: ExperimentConfig) -> ObservationSet:
    kind, path = cfg["dataset.kind"], cfg["dataset.path"]
    if kind == "movielens":
        table = dataio.load_movielens(path)
        return dataio.dense_submatrix(table, cfg["dataset.user_quantile"], cfg["dataset.item_quantile"]).obs
    with open(path, encoding="utf-8") as fh:
        obs = ObservationSet.from_csv(fh.read())
    if kind == "labstyle":
        obs = dataio.average_duplicates(obs)
    return obs


def training_observations(cfg: ExperimentConfig, seed_offset=0) -> ObservationSet:
    if cfg["dataset.kind"] == "synthetic":
        return dataio.generate_synthetic(synthetic_spec(cfg, cfg["dataset.n"][0], seed_offset)).obs
    return load_observations(cfg)


def full_grid(b_star) -> ObservationSet:
    """Every entry once, noiseless: the synthetic 'test set' for per-row errors."""
    dr, dc = b_star.shape
    rows, cols = np.divmod(np.arange(dr * dc), dc)
    return ObservationSet(dr, dc, rows, cols, b_star.ravel())


# ---------------------------------------------------------------- cells

def experiment_cells(cfg: ExperimentConfig) -> list:
    specs = cfg.estimator_specs()
    if cfg["dataset.kind"] == "synthetic":
        return [(s.method, n, r) for n in cfg["dataset.n"] for r in range(cfg["plan.n_repeats"]) for s in specs]
    return [(s.method, None, r) for r in range(cfg["plan.n_repeats"]) for s in specs]


def cell_name(cell) -> str:
    method, n, rep = cell
    return f"{method}_r{rep:03d}" if n is None else f"{method}_n{n}_r{rep:03d}"


def _fairness_pair(b_hat, test_obs, samp):
    out = {}
    for axis in ("rows", "cols"):
        try:
            out[axis] = fairness_regression(b_hat, test_obs, samp, axis).to_dict()
        except NucompleteError as exc:
            out[axis] = {"error": type(exc).__name__, "message": str(exc)}
    return out


def run_cell(cfg: ExperimentConfig, cell) -> dict:
    method, n, rep = cell
    spec = next(s for s in cfg.estimator_specs() if s.method == method)
    if n is not None:
        data = dataio.generate_synthetic(synthetic_spec(cfg, n, rep))
        fits = run_estimator(spec, data.obs, b_star=data.b_star, seed=rep)
        errs = [relative_frobenius(f.b_hat, data.b_star) for f in fits]
        best = fits[int(np.argmin(errs))]
        # round-trip through the persisted text form so replays match bit for bit
        b_hat = matcore.from_csv(matcore.to_csv(best.b_hat))
        return {
            "cell": cell_name(cell), "method": method, "n": n, "repeat": rep, "lambda": best.lam,
            "rel_frobenius": relative_frobenius(b_hat, data.b_star),
            "rel_l2pi": relative_l2pi(b_hat, data.b_star, data.p_star),
            "fairness": _fairness_pair(b_hat, full_grid(data.b_star), sampling.estimate_rank1(data.obs)),
            "b_hat": b_hat,
        }
    obs = load_observations(cfg)
    preprocess = dataio.preprocess_labstyle if cfg["dataset.kind"] == "labstyle" else None
    rec: RepeatRecord = cv_repeat(obs, spec, cfg.plan(), rep, keep_estimates=True, preprocess=preprocess)
    b_hat = matcore.from_csv(matcore.to_csv(rec.b_hat))
    eval_obs, test_obs = _real_split(obs, rec.eval_idx, rec.test_idx, preprocess)
    return {
        "cell": cell_name(cell), "method": method, "n": None, "repeat": rep, "lambda": rec.lam,
        "test_rmse": rec.test_rmse,
        "fairness": _fairness_pair(b_hat, test_obs, sampling.estimate_rank1(eval_obs)),
        "b_hat": b_hat, "eval_idx": rec.eval_idx.tolist(), "test_idx": rec.test_idx.tolist(),
    }


def _real_split(obs, eval_idx, test_idx, preprocess):
    eval_obs, test_obs = obs.subset(np.asarray(eval_idx)), obs.subset(np.asarray(test_idx))
    if preprocess is not None:
        eval_obs, (test_obs,), _ = preprocess(eval_obs, test_obs)
    return eval_obs, test_obs


def _safe_cell(args):
    cfg_values, cell = args
    cfg = ExperimentConfig(cfg_values)
    _setup_logging()
    try:
        return run_cell(cfg, cell)
    except Exception as exc:  # recorded per cell; the run continues
        return {"cell": cell_name(cell), "method": cell[0], "n": cell[1], "repeat": cell[2],
                "error": f"{type(exc).__name__}: {exc}", "traceback": traceback.format_exc()}


def run_cells(cfg: ExperimentConfig, cells, parallelism: int) -> list:
    jobs = [(cfg.values, c) for c in cells]
    if parallelism <= 1:
        return [_safe_cell(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=parallelism) as pool:
        return list(pool.map(_safe_cell, jobs))


# ---------------------------------------------------------------- reports

def _mean_2se(vals):
    vals = np.asarray(vals, dtype=float)
    se = vals.std(ddof=1) / np.sqrt(len(vals)) if len(vals) > 1 else 0.0
    return float(vals.mean()), float(2 * se)


def _write(path: Path, text: str, written: list):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")
    written.append(path)


def _write_manifest(out: Path, written: list):
    files = {}
    for p in sorted(set(written)):
        files[str(p.relative_to(out))] = hashlib.sha256(p.read_bytes()).hexdigest()
    (out / "manifest.json").write_text(json.dumps({"files": files}, indent=2, sort_keys=True), encoding="utf-8")


def write_experiment(out: Path, cfg: ExperimentConfig, results: list) -> list:
    written = []
    ok = [r for r in results if "error" not in r]
    failed = [r for r in results if "error" in r]
    synthetic = cfg["dataset.kind"] == "synthetic"
    methods = cfg["methods"]

    lines = []
    if synthetic:
        lines.append("method,n,repeat,lambda,rel_frobenius,rel_l2pi")
        for r in ok:
            lines.append(f"{r['method']},{r['n']},{r['repeat']},{r['lambda']!r},"
                         f"{r['rel_frobenius']!r},{r['rel_l2pi']!r}")
    else:
        lines.append("method,repeat,lambda,test_rmse")
        for r in ok:
            lines.append(f"{r['method']},{r['repeat']},{r['lambda']!r},{r['test_rmse']!r}")
    _write(out / "report.csv", "\n".join(lines) + "\n", written)

    summary, plot = {}, ["method,x,metric,mean,two_se"]
    for m in methods:
        mine = [r for r in ok if r["method"] == m]
        if not mine:
            continue
        entry = {}
        if synthetic:
            for n in cfg["dataset.n"]:
                at_n = [r for r in mine if r["n"] == n]
                if not at_n:
                    continue
                for metric in ("rel_frobenius", "rel_l2pi"):
                    mean, two_se = _mean_2se([r[metric] for r in at_n])
                    entry.setdefault(str(n), {})[metric] = {"mean": mean, "two_se": two_se}
                    plot.append(f"{m},{n},{metric},{mean!r},{two_se!r}")
        else:
            mean, two_se = _mean_2se([r["test_rmse"] for r in mine])
            entry = {"mean_rmse": mean, "two_se": two_se}
            plot.append(f"{m},{m},test_rmse,{mean!r},{two_se!r}")
        fr = [r["fairness"]["rows"] for r in mine if "slope" in r["fairness"]["rows"]]
        if fr:
            entry["fairness"] = {
                "slope": float(np.mean([f["slope"] for f in fr])),
                "p_value": float(np.median([f["p_value"] for f in fr])),
                "n_significant_negative": sum(f["slope"] < 0 and f["p_value"] < 0.05 for f in fr),
                "n_not_significant": sum(f["p_value"] > 0.05 for f in fr),
                "n_regressions": len(fr),
            }
        summary[m] = entry
    _write(out / "summary.json", json.dumps(summary, indent=2, sort_keys=True), written)
    _write(out / "plot_data.csv", "\n".join(plot) + "\n", written)

    fairness = {r["cell"]: r["fairness"] for r in ok}
    _write(out / "fairness.json", json.dumps(fairness, indent=2, sort_keys=True), written)
    for r in ok:
        _write(out / "predictions" / f"{r['cell']}.csv", matcore.to_csv(r["b_hat"]), written)
        if not synthetic:
            split = {"eval_idx": r["eval_idx"], "test_idx": r["test_idx"]}
            _write(out / "predictions" / f"{r['cell']}_split.json", json.dumps(split), written)
    if failed:
        fails = {r["cell"]: {"error": r["error"], "traceback": r["traceback"]} for r in failed}
        _write(out / "failures.json", json.dumps(fails, indent=2, sort_keys=True), written)
    _write_manifest(out, written)
    return failed


# ---------------------------------------------------------------- commands

def cmd_generate(cfg: ExperimentConfig, out: Path) -> int:
    written = []
    for n in cfg["dataset.n"]:
        data = dataio.generate_synthetic(synthetic_spec(cfg, n, 0))
        _write(out / f"observations_n{n}.csv", data.obs.to_csv(), written)
    _write(out / "b_star.csv", matcore.to_csv(data.b_star), written)
    _write(out / "p_star.csv", matcore.to_csv(data.p_star), written)
    _write_manifest(out, written)
    return 0


def cmd_estimate_sampling(cfg: ExperimentConfig, out: Path) -> int:
    obs = training_observations(cfg)
    est = estimate_sampling(obs, cfg["sampling.method"], cfg["dataset.seed"])
    written = []
    _write(out / "p_hat.csv", matcore.to_csv(est.p_hat), written)
    meta = {"method": est.method, "lambda": est.lam,
            "row_margins": est.row_margins.tolist(), "col_margins": est.col_margins.tolist()}
    _write(out / "sampling.json", json.dumps(meta, indent=2), written)
    _write_manifest(out, written)
    return 0


def cmd_construct_weights(cfg: ExperimentConfig, out: Path) -> int:
    obs = training_observations(cfg)
    est = estimate_sampling(obs, cfg["sampling.method"], cfg["dataset.seed"])
    b_raw = raw_estimate(obs, cfg.solver_config(), cfg["nu.raw_method"], seed=cfg["dataset.seed"]).b_hat
    w = nu_recommend_weights(obs, cfg.solver_config(), cfg.weight_config(), cfg["sampling.method"],
                             b_raw=b_raw, seed=cfg["dataset.seed"])
    written = []
    _write(out / "weights.csv", matcore.to_csv(w), written)
    diag = {}
    # both candidates are scored on the raw estimate the weights were built from
    for name, cand in (("nu_recommend", w), ("margin", margin_weights(obs))):
        diag[name] = json.loads(bound_diagnostics(b_raw, cand / cand.sum(), est.p_hat, len(obs),
                                                  cfg["dataset.noise_sd"]).to_json())
    _write(out / "diagnostics.json", json.dumps(diag, indent=2, sort_keys=True), written)
    _write_manifest(out, written)
    return 0


def cmd_fit(cfg: ExperimentConfig, out: Path) -> int:
    obs = training_observations(cfg)
    written = []
    for spec in cfg.estimator_specs():
        for i, fit in enumerate(run_estimator(spec, obs, seed=cfg["dataset.seed"])):
            stem = out / spec.method / f"lambda_{i:03d}"
            stem.parent.mkdir(parents=True, exist_ok=True)
            fit.save(stem)
            written += [Path(f"{stem}.csv"), Path(f"{stem}.json")]
    _write_manifest(out, written)
    return 0


def cmd_experiment(cfg: ExperimentConfig, out: Path) -> int:
    results = run_cells(cfg, experiment_cells(cfg), cfg["parallelism"])
    failed = write_experiment(out, cfg, results)
    for r in failed:
        log.error("cell %s failed: %s", r["cell"], r["error"])
    return 1 if failed else 0


def replay_fairness(cfg: ExperimentConfig, out: Path) -> dict:
    """Recompute every cell's fairness regressions from persisted predictions."""
    result = {}
    obs = None if cfg["dataset.kind"] == "synthetic" else load_observations(cfg)
    preprocess = dataio.preprocess_labstyle if cfg["dataset.kind"] == "labstyle" else None
    for cell in experiment_cells(cfg):
        name = cell_name(cell)
        path = out / "predictions" / f"{name}.csv"
        if not path.exists():
            continue
        b_hat = matcore.load_csv(path)
        method, n, rep = cell
        if n is not None:
            data = dataio.generate_synthetic(synthetic_spec(cfg, n, rep))
            result[name] = _fairness_pair(b_hat, full_grid(data.b_star), sampling.estimate_rank1(data.obs))
        else:
            split = json.loads((out / "predictions" / f"{name}_split.json").read_text())
            eval_obs, test_obs = _real_split(obs, split["eval_idx"], split["test_idx"], preprocess)
            result[name] = _fairness_pair(b_hat, test_obs, sampling.estimate_rank1(eval_obs))
    return result


def cmd_fairness(cfg: ExperimentConfig, out: Path) -> int:
    if not (out / "predictions").is_dir():
        log.error("no predictions under %s; run 'experiment' first", out)
        return 2
    result = replay_fairness(cfg, out)
    (out / "fairness_replay.json").write_text(json.dumps(result, indent=2, sort_keys=True), encoding="utf-8")
    bad = [k for k, v in result.items() if any("error" in v[a] for a in v)]
    return 1 if bad else 0


COMMANDS = {
    "generate": cmd_generate,
    "estimate-sampling": cmd_estimate_sampling,
    "construct-weights": cmd_construct_weights,
    "fit": cmd_fit,
    "experiment": cmd_experiment,
    "fairness": cmd_fairness,
}


def _setup_logging():
    level = os.environ.get("NUCOMPLETE_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="nucomplete", description=__doc__.split("\n")[0])
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("--config", required=True, help="flat key = value configuration file")
    ap.add_argument("--seed", type=int, help="overrides dataset.seed and plan.rng_seed")
    ap.add_argument("--parallelism", type=int, help="overrides parallelism")
    ap.add_argument("--output-dir", help="overrides output_dir")
    return ap


def main(argv=None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    try:
        cfg = ExperimentConfig.load(args.config)
        if args.seed is not None:
            cfg.values["dataset.seed"] = args.seed
            cfg.values["plan.rng_seed"] = args.seed
        if args.parallelism is not None:
            cfg.values["parallelism"] = args.parallelism
        if args.output_dir is not None:
            cfg.values["output_dir"] = args.output_dir
        cfg.validate()
        out = Path(cfg["output_dir"])
        out.mkdir(parents=True, exist_ok=True)
        return COMMANDS[args.command](cfg, out)
    except (NucompleteError, OSError, ValueError) as exc:
        log.error("%s", exc)
        return 2


if __name__ == "__main__":
    sys.exit(main())
