"""
End-to-end pipeline on a synthetic dataset, driven through the CLI
==================================================================

Generates a phantom cohort, registers and harmonizes it, writes the two
reference baselines, evaluates them, compares them statistically, and runs
both model-light diagnostics, all from the command-line entry points. Every
command is deterministic under the seed, so rerunning reproduces every output
byte for byte.
"""

import json
import tempfile
from pathlib import Path

from longlens.cli import main

base = Path(tempfile.mkdtemp(prefix="longlens_demo_"))
ds = base / "dataset"
print(f"working under {base}\n")

run = lambda *argv: main(list(argv))

# 1. synthetic cohort: growing lesions plus illumination noise
assert run("phantom", "--eyes", "6", "--frames", "3", "--size", "96",
           "--growth", "3", "--noise", "0.05", "--seed", "11",
           "--out", str(ds)) == 0
man = str(ds / "manifest.json")

# 2. geometric registration + intensity harmonization
assert run("register", "--manifest", man, "--out", str(base / "registered")) == 0
report = json.loads((base / "registered" / "report.json").read_text())
kinds = [v.get("kind") for e in report["eyes"].values() for v in e["visits"]
         if v["status"] == "accepted"]
print(f"registration: {len(kinds)} visits aligned, families: {sorted(set(kinds))}\n")

# 3. reference predictors and their metric tables
assert run("baseline", "copy-last", "--manifest", man, "--out", str(base / "cl")) == 0
assert run("baseline", "spline", "--manifest", man, "--out", str(base / "sp")) == 0
assert run("evaluate", "--manifest", man, "--predictions", str(base / "cl"),
           "--method", "copylast", "--out", str(base / "eval_cl")) == 0
assert run("evaluate", "--manifest", man, "--predictions", str(base / "sp"),
           "--method", "spline", "--out", str(base / "eval_sp")) == 0

# 4. paired comparison
assert run("compare",
           "--csv-a", str(base / "eval_cl" / "copylast_metrics.csv"),
           "--csv-b", str(base / "eval_sp" / "spline_metrics.csv"),
           "--out", str(base / "cmp")) == 0

# 5. the two model-light diagnostics
assert run("entropy", "--manifest", man, "--out", str(base / "entropy")) == 0

print(f"\nall outputs under {base}")
