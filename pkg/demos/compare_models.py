"""Compare model families on a short synthetic run.

The neural models are slow at full scale, so this uses one week of data and
an epoch cap; at this size the recurrent models rarely get past the
majority class. Pass model names to pick a subset, e.g.
``python demos/compare_models.py rf gbt lstm_serial``.
"""

import sys
import tempfile
import time

from aqimpute import zoo
from aqimpute.cli import main

kinds = sys.argv[1:] or list(zoo.KINDS)
out = tempfile.mkdtemp(prefix="aq_compare_")
args = ["pipeline", "--out", out, "--seed", "7", "--hours", "168", "--epochs", "5"]
for k in kinds:
    args += ["--model", zoo.check_kind(k)]

t = time.perf_counter()
code = main(args)
print(f"exit {code} after {time.perf_counter() - t:.0f}s; ranked table in {out}/report/results.txt")
