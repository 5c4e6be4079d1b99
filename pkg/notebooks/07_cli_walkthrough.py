"""
The command-line pipeline end to end
====================================

Every subcommand writes CSV/JSON plus a run manifest into ``--out-dir``.
"""

import json
import subprocess
import sys
import tempfile
from pathlib import Path


def pollstrat(*args):
    cmd = [sys.executable, "-m", "pollstrat.cli", *map(str, args)]
    res = subprocess.run(cmd, capture_output=True, text=True)
    print("$ pollstrat", " ".join(map(str, args)), "->", res.returncode)
    return res


work = Path(tempfile.mkdtemp())
data = work / "data"
pollstrat("synth", "--seed", 4, "--n-polls", 300, "--noise-sd", 0.05, "--missingness", 0.2, "--out-dir", data)
inputs = ["--polls", data / "polls.csv", "--attributes", data / "attributes.csv",
          "--color-map", data / "color_map.json"]

pollstrat("validate", *inputs, "--reference", data / "reference.json", "--out-dir", work / "validate")
print(pollstrat("fit", *inputs, "--dims", "gender,age,ideology,location", "--out-dir", work / "fit").stdout)
pollstrat("poststratify", *inputs, "--reference", data / "reference.json", "--replicates", 300,
          "--out-dir", work / "est")
est = json.loads((work / "est" / "estimate.json").read_text())
print("estimate", est["overall"], "abs_error", est["abs_error"])
pollstrat("sweep", *inputs, "--reference", data / "reference.json", "--replicates", 100,
          "--thresholds", "0,100,1000,4000", "--out-dir", work / "sweep")
print((work / "sweep" / "sweep.csv").read_text())
print(json.dumps(json.loads((work / "est" / "poststratify.manifest.json").read_text()), indent=2)[:600])
