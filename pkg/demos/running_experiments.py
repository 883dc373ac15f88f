"""
Running the experiment catalog from Python
===========================================

The same experiments the ``gdgc`` command runs are available as configs.
Each run writes ``trace.csv``, ``report.json`` and friends to its own
directory; ``report.json`` has no timings, so reruns are byte-identical.
"""

import json
import tempfile
from pathlib import Path

from gdgc import experiments as ex

for name, topic, desc in ex.list_experiments()[:4]:
    print(f"{name:28s} [{topic}]")

with tempfile.TemporaryDirectory() as out:
    cfgs = [ex.builtin_config(n, seed=0) for n in ("gd-quadratic", "pocs-halfspace-ball")]
    for r in ex.run_manifest(cfgs, out, workers=2):
        print(r.name, r.status)
        report = json.loads((Path(out) / r.name / "report.json").read_text())
        for c in report["certificates"]:
            print(f"  {c['id']}: worst lhs - rhs {c['worst_slack']:.2e}")
