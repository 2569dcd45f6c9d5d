import csv
import filecmp
import subprocess
import sys

import numpy as np
import pytest

from aqimpute.cli import build_parser, main, resolve
from aqimpute.core import MISSING

SMALL = ["--hours", "240", "--seed", "3"]


@pytest.fixture(scope="module")
def run_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    assert main(["pipeline", "--out", str(out), *SMALL]) == 0
    return out


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_pipeline_artifacts(run_dir):
    for rel in ["raw/dpd.csv", "ingest/stations.csv", "grid/merged.csv", "grid/missing_rates.csv",
                "decompose/decomposition.csv", "features/features.csv", "features/split.csv",
                "models/rf_wf.trees.csv", "eval/results.csv", "report/results.txt",
                "impute/features_imputed.csv"]:
        assert (run_dir / rel).exists(), rel


def test_evaluate_one_row_per_job(run_dir):
    rows = _rows(run_dir / "eval" / "results.csv")
    assert rows[0] == ["Method", "Accuracy", "Precision", "Recall", "F1"]
    assert sorted(r[0] for r in rows[1:]) == ["KNN (nf)", "KNN (wf)", "RF (nf)", "RF (wf)"]


def test_view_widths(run_dir):
    assert len(_rows(run_dir / "features" / "view_nf.csv")[0]) == 19 + 1
    assert len(_rows(run_dir / "features" / "view_wf.csv")[0]) == 32 + 1


def test_impute_fills_everything_and_keeps_labels(run_dir):
    orig = _rows(run_dir / "features" / "features.csv")
    filled = _rows(run_dir / "impute" / "features_imputed.csv")
    assert orig[0] == filled[0]
    j = orig[0].index("label")
    before = np.array([int(r[j]) for r in orig[1:]])
    after = np.array([int(r[j]) for r in filled[1:]])
    assert np.all(after != MISSING) and np.all(after >= 0)
    known = before != MISSING
    np.testing.assert_array_equal(after[known], before[known])
    assert known.sum() < len(before)


def test_stage_rerun_is_idempotent(run_dir, tmp_path):
    import shutil
    copy = tmp_path / "copy"
    shutil.copytree(run_dir, copy)
    assert main(["features", "--out", str(copy), *SMALL]) == 0
    assert main(["evaluate", "--out", str(copy), *SMALL]) == 0
    for rel in ["features/features.csv", "features/split.csv", "eval/results.csv"]:
        assert filecmp.cmp(run_dir / rel, copy / rel, shallow=False), rel


def test_stage_order_violation(tmp_path, capsys):
    assert main(["train", "--out", str(tmp_path)]) == 3
    assert "run `aqimpute features` first" in capsys.readouterr().err


def test_missing_inputs(tmp_path, capsys):
    assert main(["ingest", "--out", str(tmp_path)]) == 2
    assert "missing input" in capsys.readouterr().err


def test_untrained_model_reported(run_dir, capsys):
    assert main(["evaluate", "--out", str(run_dir), *SMALL, "--model", "gbt"]) == 3
    assert "train --model gbt" in capsys.readouterr().err


def test_config_file_and_flag_precedence(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# comment\nseed = 5\nmodels = rf, gbt\nsmote = false\ncell-size = 1000\n"
                   f"out = {tmp_path / 'x'}\n")
    args = build_parser().parse_args(["train", "--config", str(cfg), "--seed", "9",
                                      "--with-external-features"])
    rc = resolve(args)
    assert rc.seed == 9 and rc.models == ("rf", "gbt") and rc.smote is False
    assert rc.modes == ("wf",) and rc.grid.cell_size == 1000.0 and rc.grid.rows == 4


def test_bad_config_key(tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("colour = blue\n")
    assert main(["train", "--config", str(cfg), "--out", str(tmp_path)]) == 2
    assert "unknown config key" in capsys.readouterr().err


def test_console_entry_point_help():
    res = subprocess.run([sys.executable, "-m", "aqimpute.cli", "--help"], capture_output=True, text=True)
    assert res.returncode == 0 and "pipeline" in res.stdout
