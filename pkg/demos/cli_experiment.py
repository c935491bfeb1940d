"""
Running an experiment from the command line
===========================================

Equivalent shell session::

    python -m nucomplete experiment --config run.cfg --output-dir out
    python -m nucomplete fairness --config run.cfg --output-dir out
"""
import json
import tempfile
from pathlib import Path

from nucomplete.cli import main

CONFIG = """
dataset.kind = synthetic
dataset.d = 20
dataset.rank_b = 3
dataset.rank_p = 3
dataset.n = 400, 800
methods = uniform, margin, nu_recommend
solver.n_lambdas = 10
plan.n_repeats = 2
"""

with tempfile.TemporaryDirectory() as tmp:
    cfg = Path(tmp) / "run.cfg"
    cfg.write_text(CONFIG)
    out = Path(tmp) / "out"
    print("experiment exit code:", main(["experiment", "--config", str(cfg), "--output-dir", str(out)]))
    print((out / "report.csv").read_text())
    print("fairness exit code:", main(["fairness", "--config", str(cfg), "--output-dir", str(out)]))
    print("files:", sorted(json.loads((out / "manifest.json").read_text())["files"]))
