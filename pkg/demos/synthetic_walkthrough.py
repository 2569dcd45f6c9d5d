"""Run the stages one at a time on two weeks of synthetic data.

After each stage the script prints what it left on disk. Run with
``python demos/synthetic_walkthrough.py [outdir]``.
"""

import csv
import sys
import tempfile
from pathlib import Path

import numpy as np

from aqimpute.cli import main

out = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(tempfile.mkdtemp(prefix="aq_walk_"))
common = ["--out", str(out), "--seed", "7", "--hours", "336"]


def rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


main(["synth", *common])
print("synthetic inputs:", sorted(p.name for p in (out / "raw").iterdir()))

for stage in ("ingest", "grid", "decompose", "features"):
    main([stage, *common])
    print(f"{stage}:", sorted(p.name for p in (out / stage).iterdir()))

hist = rows(out / "features" / "class_histogram.csv")
print("labelled rows per class:", {r["label"]: int(r["count"]) for r in hist})

main(["train", *common, "--model", "rf", "--model", "knn"])
main(["evaluate", *common, "--model", "rf", "--model", "knn"])
main(["report", *common, "--model", "rf", "--model", "knn"])

main(["impute", *common])
labels = np.array([int(r["label"]) for r in rows(out / "impute" / "labels.csv")])
imputed = np.array([int(r["imputed"]) for r in rows(out / "impute" / "labels.csv")])
print(f"imputed {imputed.sum()} of {len(labels)} cell-hours;",
      "class counts after imputation:", np.bincount(labels, minlength=4).tolist())
print("artifacts in", out)
