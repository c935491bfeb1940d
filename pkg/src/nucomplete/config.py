"""Flat ``section.key = value`` experiment configuration.

One assignment per line; ``#`` starts a comment.  Every key must appear in
:data:`SCHEMA`, which fixes its type and default.  Lists are comma-separated.

Example::

    dataset.kind = synthetic
    dataset.d = 50
    dataset.n = 1000, 1200, 1400
    methods = uniform, margin, nu_recommend
    plan.n_repeats = 20
"""
from __future__ import annotations

from dataclasses import dataclass

from .errors import ConfigurationError
from .estimators import METHODS, EstimatorSpec
from .evaluation import SplitPlan
from .solver import SolverConfig
from .weights import WeightConstructionConfig


def _str_list(text):
    return [t.strip() for t in text.split(",") if t.strip()]


def _int_list(text):
    return [int(t) for t in _str_list(text)]


def _float_list(text):
    return [float(t) for t in _str_list(text)]


# key -> (parser, default)
SCHEMA = {
    "dataset.kind": (str, "synthetic"),
    "dataset.path": (str, ""),
    "dataset.d": (int, 50),
    "dataset.rank_b": (int, 10),
    "dataset.rank_p": (int, 10),
    "dataset.noise_sd": (float, 1.0),
    "dataset.n": (_int_list, [1500]),
    "dataset.seed": (int, 0),
    "dataset.user_quantile": (float, 0.75),
    "dataset.item_quantile": (float, 0.75),
    "methods": (_str_list, ["uniform", "margin", "ipw_uniform", "nu_recommend"]),
    "solver.lambdas": (_float_list, None),
    "solver.beta": (float, 0.5),
    "solver.t_init": (float, 1.0),
    "solver.tol": (float, 1e-8),
    "solver.max_iter": (int, 2000),
    "solver.n_lambdas": (int, 30),
    "solver.lambda_ratio": (float, 1e-3),
    "weights.l_bound": (float, 3.0),
    "weights.gamma": (float, 3.0),
    "weights.step_size": (float, 0.2),
    "weights.max_iter": (int, 2000),
    "weights.tol": (float, 1e-6),
    "sampling.method": (str, "rank1"),
    "nu.raw_method": (str, "margin"),
    "plan.eval_fraction": (float, 0.8),
    "plan.test_fraction": (float, 0.2),
    "plan.inner_train_fraction": (float, 0.8),
    "plan.n_repeats": (int, 20),
    "plan.rng_seed": (int, 0),
    "output_dir": (str, "out"),
    "parallelism": (int, 1),
}

DATASET_KINDS = ("synthetic", "movielens", "labstyle", "observations")


def parse_config_text(text: str, source="<config>") -> dict:
    values = {k: default for k, (_, default) in SCHEMA.items()}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"{source}:{lineno}: expected 'key = value'")
        key, val = (s.strip() for s in line.split("=", 1))
        if key not in SCHEMA:
            raise ConfigurationError(f"{source}:{lineno}: unknown key {key!r}")
        try:
            values[key] = SCHEMA[key][0](val)
        except ValueError as exc:
            raise ConfigurationError(f"{source}:{lineno}: bad value for {key}: {val!r}") from exc
    return values


@dataclass
class ExperimentConfig:
    values: dict

    @classmethod
    def from_text(cls, text, source="<config>"):
        cfg = cls(parse_config_text(text, source))
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as fh:
            return cls.from_text(fh.read(), str(path))

    def __getitem__(self, key):
        return self.values[key]

    def validate(self):
        v = self.values
        if v["dataset.kind"] not in DATASET_KINDS:
            raise ConfigurationError(f"dataset.kind must be one of {DATASET_KINDS}")
        if v["dataset.kind"] != "synthetic" and not v["dataset.path"]:
            raise ConfigurationError("dataset.path is required for non-synthetic data")
        if not v["methods"]:
            raise ConfigurationError("at least one method is required")
        for m in v["methods"]:
            if m not in METHODS:
                raise ConfigurationError(f"unknown method {m!r}")
        if v["parallelism"] < 1:
            raise ConfigurationError("parallelism must be positive")
        # constructing the typed objects runs their own checks
        self.solver_config()
        self.weight_config()
        self.plan()
        self.estimator_specs()

    def solver_config(self) -> SolverConfig:
        v = self.values
        return SolverConfig(lambdas=v["solver.lambdas"], beta=v["solver.beta"], t_init=v["solver.t_init"],
                            tol=v["solver.tol"], max_iter=v["solver.max_iter"],
                            n_lambdas=v["solver.n_lambdas"], lambda_ratio=v["solver.lambda_ratio"])

    def weight_config(self) -> WeightConstructionConfig:
        v = self.values
        return WeightConstructionConfig(l_bound=v["weights.l_bound"], gamma=v["weights.gamma"],
                                        step_size=v["weights.step_size"], max_iter=v["weights.max_iter"],
                                        tol=v["weights.tol"])

    def plan(self) -> SplitPlan:
        v = self.values
        return SplitPlan(eval_fraction=v["plan.eval_fraction"], test_fraction=v["plan.test_fraction"],
                         inner_train_fraction=v["plan.inner_train_fraction"],
                         n_repeats=v["plan.n_repeats"], rng_seed=v["plan.rng_seed"])

    def estimator_specs(self) -> list:
        v = self.values
        return [EstimatorSpec(m, self.solver_config(), self.weight_config(), v["sampling.method"],
                              v["nu.raw_method"]) for m in v["methods"]]
