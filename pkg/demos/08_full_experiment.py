"""One call from config to results table, then the CLI face of the same run.

The runner splits once per outcome, fits every transformer inside the
training folds, grid-searches by cross-validated F1, refits the winner,
and writes per-cell scores so any two cells can be compared with a paired
permutation test. The manifest it writes replays bit-identically.
"""

import json
import subprocess
import sys
import tempfile
from pathlib import Path

from icumort.experiment import (
    ExperimentConfig,
    cell_dir,
    run_experiment,
    run_permtest,
)

cfg = ExperimentConfig.from_obj({
    "cohort": {"synth": {"n": 500}},
    "outcomes": ["hospital"],
    "feature_sets": ["structured", "notes", "combined"],
    "sampling": ["none"],
    "algorithms": ["l2-lr"],
    "grids": {"l2-lr": {"C": [0.1, 1.0]}},
    "folds": 3,
    "min_df": 3,
    "seed": 1,
})

with tempfile.TemporaryDirectory() as d:
    out = Path(d) / "run"
    rows = run_experiment(cfg, out)

    print(f"{'feature set':<12} {'auc':>7} {'f1':>7} best C")
    for r in rows:
        print(f"{r['feature_set']:<12} {r['auc']:>7.3f} {r['f1']:>7.3f} "
              f"{r['best_params']['C']}")

    res = run_permtest(out, "combined/hospital/none/l2-lr",
                       "notes/hospital/none/l2-lr",
                       n_perm=1000, seed=0)
    print(f"\ncombined vs notes-only: dAUC {res.observed:+.4f}, "
          f"p = {res.p_value:.4f}")

    manifest = json.loads((out / "manifest.json").read_text())
    print(f"manifest pins {len(manifest['cells'])} cells and the "
          f"{len(manifest['splits'])} outcome split(s)")

    # the same artifacts feed the command-line tools
    model = cell_dir(out, "structured", "hospital", "none", "l2-lr") / "model.json"
    top = subprocess.run(
        [sys.executable, "-m", "icumort.cli", "rank", str(model), "-k", "5"],
        capture_output=True, text=True, check=True)
    print("\ntop structured coefficients via the CLI:")
    print(top.stdout.rstrip())
