"""Command-line pipeline: ``aqimpute <stage> [options]``.

Every stage reads the artifacts of the previous ones from the output
directory and writes its own under a stage subdirectory::

    raw/        synthetic source CSVs (``synth``)
    ingest/     normalized readings, stations, hourly traffic and weather
    grid/       per-source and merged cell-hour tables, missing rates
    decompose/  citywide decomposition and hourly/weekday profiles
    features/   feature table, model views, train/test split
    models/     trained models
    eval/       test-set probabilities, results table, confusion and ROC CSVs
    report/     ranked text table and SVG plots
    impute/     feature table with every missing label filled

Options may also come from a key-value file (``--config``): one
``key = value`` per line, ``#`` starts a comment, keys are the long option
names without dashes (``-`` or ``_``), lists are comma separated and
booleans are ``true``/``false``. Command-line flags override the file.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import dataclass, field, replace
from datetime import datetime
from pathlib import Path

import numpy as np

from . import decompose, features, gridfuse, ingest, zoo
from .core import MISSING, N_CLASSES, DUBLIN_BOUNDS, DUBLIN_HOURS, DUBLIN_START, GridSpec, Source
from .errors import AQImputeError, StageOrderError
from .evaluation import evaluate as eval_report
from .evaluation import format_table, write_report
from .features import FeatureTable
from .synth import SOURCES, SynthConfig, generate

log = logging.getLogger("aqimpute")

STAGES = ("synth", "ingest", "grid", "decompose", "features", "train", "impute", "evaluate",
          "report", "pipeline")
SOURCE_OF = {"dpd": Source.DPD_MOBILE, "epa": Source.EPA, "google": Source.GOOGLE}
INPUTS = ("dpd", "epa", "google", "traffic", "weather")
DEFAULT_MODELS = ("rf", "knn")
DEFAULT_MODES = ("nf", "wf")


@dataclass
class RunConfig:
    out: Path = Path("run")
    seed: int = 0
    grid: GridSpec = field(default_factory=GridSpec.dublin)
    inputs: dict = field(default_factory=dict)   # name -> path; empty means raw/ from synth
    models: tuple = DEFAULT_MODELS
    modes: tuple = DEFAULT_MODES
    smote: bool = True
    epochs: int | None = None
    impute_model: str = "rf"
    impute_mode: str = "wf"
    svg: bool = False

    def input_path(self, name: str) -> Path:
        return Path(self.inputs.get(name) or self.out / "raw" / f"{name}.csv")

    def stage_dir(self, stage: str) -> Path:
        return self.out / stage


class UsageError(AQImputeError):
    """Bad option value or missing input file."""


# --------------------------------------------------------------------- config

def read_config_file(path) -> dict[str, str]:
    out = {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from exc
    for n, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{n}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key.replace("-", "_").lower()] = value
    return out


def _bool(v) -> bool:
    if isinstance(v, bool):
        return v
    s = str(v).strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise UsageError(f"not a boolean: {v!r}")


def _list(v) -> tuple:
    if isinstance(v, (list, tuple)):
        items = [x for part in v for x in str(part).split(",")]
    else:
        items = str(v).split(",")
    return tuple(x.strip() for x in items if x.strip())


def resolve(args: argparse.Namespace) -> RunConfig:
    """Merge defaults, the config file and command-line flags (in rising priority)."""
    file_cfg = read_config_file(args.config) if args.config else {}
    known = {"out", "seed", "model", "models", "mode", "modes", "smote", "epochs", "impute_model",
             "impute_mode", "svg", "north", "west", "south", "east", "cell_size", "start", "hours",
             *INPUTS}
    unknown = sorted(set(file_cfg) - known)
    if unknown:
        raise UsageError(f"unknown config key(s): {', '.join(unknown)}")

    def pick(name, *aliases):
        v = getattr(args, name, None)
        if v is not None:
            return v
        for key in (name, *aliases):
            if key in file_cfg:
                return file_cfg[key]
        return None

    cfg = RunConfig()
    if (v := pick("out")) is not None:
        cfg.out = Path(v)
    if (v := pick("seed")) is not None:
        cfg.seed = int(v)
    if (v := pick("model", "models")) is not None:
        cfg.models = tuple(zoo.check_kind(k) for k in _list(v))
    if (v := pick("mode", "modes")) is not None:
        cfg.modes = _list(v)
    for m in cfg.modes:
        if m not in DEFAULT_MODES:
            raise UsageError(f"unknown feature mode {m!r}")
    if (v := pick("smote")) is not None:
        cfg.smote = _bool(v)
    if (v := pick("epochs")) is not None:
        cfg.epochs = int(v)
        if cfg.epochs < 1:
            raise UsageError("--epochs must be positive")
    if (v := pick("impute_model")) is not None:
        cfg.impute_model = zoo.check_kind(str(v))
    if (v := pick("impute_mode")) is not None:
        cfg.impute_mode = str(v)
    if (v := pick("svg")) is not None:
        cfg.svg = _bool(v)
    bounds = [pick(k) for k in ("north", "west", "south", "east")]
    grid_kw = {}
    if any(b is not None for b in bounds):
        grid_kw.update({k: float(b if b is not None else d) for k, b, d in
                        zip(("north_lat", "west_lon", "south_lat", "east_lon"), bounds, DUBLIN_BOUNDS)})
    if (v := pick("cell_size")) is not None:
        grid_kw["cell_size"] = float(v)
    if (v := pick("start")) is not None:
        grid_kw["start_time"] = datetime.fromisoformat(str(v).replace("Z", "+00:00"))
    if (v := pick("hours")) is not None:
        grid_kw["n_hours"] = int(v)
    if grid_kw:
        base = dict(zip(("north_lat", "west_lon", "south_lat", "east_lon"), DUBLIN_BOUNDS))
        base.update(start_time=DUBLIN_START, n_hours=DUBLIN_HOURS)
        base.update(grid_kw)
        try:
            cfg.grid = GridSpec(**base)
        except ValueError as exc:
            raise UsageError(str(exc)) from exc
    cfg.inputs = {k: Path(v) for k in INPUTS if (v := pick(k)) is not None}
    return cfg


# --------------------------------------------------------------------- helpers

def _need(path: Path, stage: str) -> Path:
    if not path.exists():
        raise StageOrderError(f"{path} not found; run `aqimpute {stage}` first")
    return path


def _write_rows(path: Path, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _write_spec(cfg: RunConfig) -> None:
    cfg.out.mkdir(parents=True, exist_ok=True)
    (cfg.out / "grid_spec.json").write_text(json.dumps(cfg.grid.to_dict(), sort_keys=True) + "\n",
                                            encoding="utf-8")


def _load_table(cfg: RunConfig) -> FeatureTable:
    path = _need(cfg.stage_dir("features") / "features.csv", "features")
    return FeatureTable.from_csv(path, cfg.grid)


def _load_split(cfg: RunConfig):
    path = _need(cfg.stage_dir("features") / "split.csv", "features")
    data = np.loadtxt(path, delimiter=",", skiprows=1, dtype=str, ndmin=2)
    rows = data[:, 0].astype(np.int64)
    return np.sort(rows[data[:, 1] == "train"]), np.sort(rows[data[:, 1] == "test"])


def _jobs(cfg: RunConfig):
    """Distinct (model, mode) pairs; serial models run once whatever the modes."""
    seen = []
    for kind in cfg.models:
        for mode in cfg.modes:
            key = (kind, zoo.effective_mode(kind, mode))
            if key not in [(k, zoo.effective_mode(k, m)) for k, m in seen]:
                seen.append((kind, mode))
    return seen


# --------------------------------------------------------------------- stages

def stage_synth(cfg: RunConfig) -> dict:
    ds = generate(SynthConfig(spec=cfg.grid, seed=cfg.seed))
    paths = ds.write(cfg.stage_dir("raw"))
    rates = ds.missing_rates()
    log.info("synth: missing rates %s", {k: round(float(v), 4) for k, v in rates.items()})
    return paths


def stage_ingest(cfg: RunConfig) -> None:
    missing = [str(cfg.input_path(n)) for n in INPUTS if not cfg.input_path(n).exists()]
    if missing:
        hint = "" if cfg.inputs else " (run `aqimpute synth` or pass the input paths)"
        raise UsageError(f"missing input file(s): {', '.join(missing)}{hint}")
    d = cfg.stage_dir("ingest")
    d.mkdir(parents=True, exist_ok=True)
    summary, rejections, fixed = [], [], []
    for name in SOURCES:
        res = ingest.parse_readings(cfg.input_path(name), SOURCE_OF[name], ingest.DEFAULT_SCHEMAS[name],
                                    cfg.grid)
        ingest.write_readings(d / f"readings_{name}.csv", res.records)
        fixed += [r for r in res.records if r.source.is_fixed]
        summary.append((name, len(res.records), len(res.rejections)))
        rejections += res.rejections
    traffic = ingest.parse_traffic(cfg.input_path("traffic"), cfg.grid)
    weather = ingest.parse_weather(cfg.input_path("weather"), cfg.grid)
    ingest.write_traffic(d / "traffic.csv", traffic.records)
    ingest.write_weather(d / "weather.csv", weather.records)
    summary += [("traffic", traffic.n_rows - len(traffic.rejections), len(traffic.rejections)),
                ("weather", weather.n_rows - len(weather.rejections), len(weather.rejections))]
    rejections += traffic.rejections + weather.rejections
    ingest.write_stations(d / "stations.csv", ingest.station_catalogue(fixed))
    _write_rows(d / "summary.csv", ["input", "accepted", "rejected"], summary)
    _write_rows(d / "rejections.csv", ["file", "line", "reason"],
                [(Path(r.file).name, r.line, r.reason) for r in rejections])
    log.info("ingest: %s", ", ".join(f"{n} {a}/{a + r}" for n, a, r in summary))


def stage_grid(cfg: RunConfig) -> None:
    src, d = cfg.stage_dir("ingest"), cfg.stage_dir("grid")
    d.mkdir(parents=True, exist_ok=True)
    tables, rates = [], []
    for name in SOURCES:
        readings = ingest.read_normalized_readings(_need(src / f"readings_{name}.csv", "ingest"))
        t = gridfuse.bin_hourly(readings, cfg.grid)
        t.to_csv(d / f"cellhour_{name}.csv")
        tables.append(t)
        rates.append((name, f"{gridfuse.missing_rate(t):.6f}", t.skipped))
    merged = gridfuse.merge(tables)
    merged.to_csv(d / "merged.csv")
    rates.append(("merged", f"{gridfuse.missing_rate(merged):.6f}", ""))
    _write_rows(d / "missing_rates.csv", ["source", "missing_rate", "outside_grid"], rates)
    log.info("grid: merged missing rate %s", rates[-1][1])


def stage_decompose(cfg: RunConfig) -> None:
    merged = gridfuse.CellHourTable.from_csv(_need(cfg.stage_dir("grid") / "merged.csv", "grid"),
                                             cfg.grid)
    d = cfg.stage_dir("decompose")
    d.mkdir(parents=True, exist_ok=True)
    series = decompose.hourly_average_series(merged)
    decompose.decompose_additive(series, 24).to_csv(d / "decomposition.csv", series)
    for group in ("hour_of_day", "day_of_week"):
        decompose.write_profile(d / f"profile_{group}.csv", decompose.profile(merged, group), group)


def stage_features(cfg: RunConfig) -> None:
    ing, grd, d = cfg.stage_dir("ingest"), cfg.stage_dir("grid"), cfg.stage_dir("features")
    merged = gridfuse.CellHourTable.from_csv(_need(grd / "merged.csv", "grid"), cfg.grid)
    stations = ingest.read_stations(_need(ing / "stations.csv", "ingest"))
    fixed = []
    for name in SOURCES:
        fixed += [r for r in ingest.read_normalized_readings(_need(ing / f"readings_{name}.csv", "ingest"))
                  if r.source.is_fixed]
    obs = features.station_series(fixed, stations, cfg.grid)
    table = features.assemble(merged, stations, obs, ingest.read_traffic(ing / "traffic.csv"),
                              ingest.read_weather(ing / "weather.csv"), cfg.grid)
    d.mkdir(parents=True, exist_ok=True)
    table.to_csv(d / "features.csv")
    for mode in cfg.modes:
        features.write_view(d / f"view_{mode}.csv", table, mode)
    train, test = features.split(table.labeled, cfg.seed)
    rows = sorted([(int(i), "train") for i in train] + [(int(i), "test") for i in test])
    _write_rows(d / "split.csv", ["row", "split"], rows)
    hist = features.class_histogram(table.label)
    _write_rows(d / "class_histogram.csv", ["label", "count"], enumerate(hist.tolist()))
    log.info("features: %d rows, %d labelled, classes %s", len(table), len(table.labeled), hist.tolist())


def stage_train(cfg: RunConfig) -> None:
    table = _load_table(cfg)
    train, _ = _load_split(cfg)
    d = cfg.stage_dir("models")
    d.mkdir(parents=True, exist_ok=True)
    for kind, mode in _jobs(cfg):
        model = zoo.fit(kind, table, mode, train, cfg.seed, use_smote=cfg.smote, epochs=cfg.epochs)
        zoo.save(kind, model, zoo.model_file(d, kind, mode))
        log.info("train: %s", zoo.run_name(kind, mode))


def _load_model(cfg: RunConfig, kind: str, mode: str):
    path = zoo.model_file(cfg.stage_dir("models"), kind, mode)
    if not path.exists():
        raise StageOrderError(f"{path} not found; run `aqimpute train --model {kind}` first")
    return zoo.load(kind, path)


def stage_evaluate(cfg: RunConfig) -> list:
    table = _load_table(cfg)
    train, test = _load_split(cfg)
    d = cfg.stage_dir("eval")
    d.mkdir(parents=True, exist_ok=True)
    history = zoo.known_labels(table, train)
    truth = table.label[test]
    reports = []
    for kind, mode in _jobs(cfg):
        model = _load_model(cfg, kind, mode)
        proba = zoo.predict_proba(kind, model, table, mode, test, history)
        name, tag = zoo.display_name(kind, mode)
        r = eval_report(name, tag, proba, truth)
        reports.append(r)
        _write_rows(d / f"scores_{zoo.run_name(kind, mode)}.csv",
                    ["row", "truth"] + [f"p{c}" for c in range(N_CLASSES)],
                    [(int(i), int(t), *(repr(float(p)) for p in ps)) for i, t, ps in zip(test, truth, proba)])
        log.info("evaluate: %s accuracy %.4f f1 %.4f", r.method, r.accuracy, r.f1)
    write_report(reports, d)
    return reports


def stage_report(cfg: RunConfig) -> str:
    d = cfg.stage_dir("eval")
    reports = []
    for kind, mode in _jobs(cfg):
        path = _need(d / f"scores_{zoo.run_name(kind, mode)}.csv", "evaluate")
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        name, tag = zoo.display_name(kind, mode)
        reports.append(eval_report(name, tag, data[:, 2:], data[:, 1].astype(np.int64)))
    out = cfg.stage_dir("report")
    write_report(reports, out, svg=cfg.svg)
    text = format_table(reports)
    sys.stdout.write(text)
    return text


def stage_impute(cfg: RunConfig) -> None:
    table = _load_table(cfg)
    kind, mode = cfg.impute_model, cfg.impute_mode
    model = _load_model(cfg, kind, mode)
    missing = np.flatnonzero(table.label == MISSING)
    filled = table.label.copy()
    if len(missing):
        filled[missing] = np.argmax(zoo.predict_proba(kind, model, table, mode, missing), axis=1)
    d = cfg.stage_dir("impute")
    d.mkdir(parents=True, exist_ok=True)
    table.with_labels(filled).to_csv(d / "features_imputed.csv")
    spec = cfg.grid
    cell = np.arange(len(filled)) // spec.n_hours
    was_missing = table.label == MISSING
    _write_rows(d / "labels.csv", ["row", "col", "hour_index", "label", "imputed"],
                zip((cell // spec.cols).tolist(), (cell % spec.cols).tolist(),
                    table.hour_index.tolist(), filled.tolist(), was_missing.astype(int).tolist()))
    log.info("impute: %d labels filled with %s", len(missing), zoo.run_name(kind, mode))


def stage_pipeline(cfg: RunConfig) -> None:
    _write_spec(cfg)
    if not cfg.inputs:
        stage_synth(cfg)
    for stage in (stage_ingest, stage_grid, stage_decompose, stage_features, stage_train,
                  stage_evaluate, stage_report):
        stage(cfg)
    if (cfg.impute_model, cfg.impute_mode) not in _jobs(cfg):
        stage_train(replace(cfg, models=(cfg.impute_model,), modes=(cfg.impute_mode,)))
    stage_impute(cfg)


RUNNERS = {
    "synth": stage_synth, "ingest": stage_ingest, "grid": stage_grid, "decompose": stage_decompose,
    "features": stage_features, "train": stage_train, "impute": stage_impute,
    "evaluate": stage_evaluate, "report": stage_report, "pipeline": stage_pipeline,
}


# --------------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    g = common.add_argument_group("run")
    g.add_argument("--config", help="key = value file supplying defaults")
    g.add_argument("--out", help="output directory (default: run)")
    g.add_argument("--seed", type=int, help="root seed for every random choice (default: 0)")
    g.add_argument("--model", action="append", metavar="KIND",
                   help=f"model to train/evaluate, repeatable: {', '.join(zoo.KINDS)} (default: rf, knn)")
    ext = g.add_mutually_exclusive_group()
    ext.add_argument("--with-external-features", dest="mode", action="store_const", const="wf",
                     help="use the wf view (traffic, weather, nearest stations)")
    ext.add_argument("--no-external-features", dest="mode", action="store_const", const="nf",
                     help="use the nf view (time and cell only)")
    sm = g.add_mutually_exclusive_group()
    sm.add_argument("--smote", dest="smote", action="store_const", const=True,
                    help="balance training rows with SMOTE (default)")
    sm.add_argument("--no-smote", dest="smote", action="store_const", const=False)
    g.add_argument("--epochs", type=int, help="epoch cap for neural models")
    g.add_argument("--impute-model", help="model used by `impute` (default: rf)")
    g.add_argument("--impute-mode", help="feature view used by `impute` (default: wf)")
    g.add_argument("--svg", dest="svg", action="store_const", const=True, help="write SVG plots")
    g.add_argument("-v", "--verbose", action="store_true")
    grid = common.add_argument_group("grid")
    for key, help_ in (("north", "north latitude"), ("west", "west longitude"),
                       ("south", "south latitude"), ("east", "east longitude")):
        grid.add_argument(f"--{key}", type=float, help=help_)
    grid.add_argument("--cell-size", type=float, help="cell edge in metres (default: 500)")
    grid.add_argument("--start", help="first hour, ISO-8601 UTC")
    grid.add_argument("--hours", type=int, help="number of hourly slots (default: 2208)")
    inp = common.add_argument_group("inputs (default: <out>/raw/<name>.csv)")
    for name in INPUTS:
        inp.add_argument(f"--{name}", metavar="CSV")

    parser = argparse.ArgumentParser(prog="aqimpute", description="PM2.5 level imputation pipeline")
    sub = parser.add_subparsers(dest="stage", required=True, metavar="stage")
    docs = {
        "synth": "generate calibrated synthetic inputs", "ingest": "parse and validate input CSVs",
        "grid": "bin readings into cell-hours and merge sources",
        "decompose": "trend/seasonal split and hourly/weekday profiles",
        "features": "assemble the feature table and train/test split",
        "train": "fit the requested models", "impute": "fill every missing label",
        "evaluate": "score models on the test split", "report": "ranked results table and plots",
        "pipeline": "run every stage in order",
    }
    for stage in STAGES:
        sub.add_parser(stage, parents=[common], help=docs[stage], description=docs[stage])
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(name)s: %(message)s", stream=sys.stderr)
    try:
        cfg = resolve(args)
        if args.stage != "pipeline":
            _write_spec(cfg)
        RUNNERS[args.stage](cfg)
    except StageOrderError as exc:
        print(f"aqimpute: stage order: {exc}", file=sys.stderr)
        return 3
    except (UsageError, ValueError) as exc:
        print(f"aqimpute: error: {exc}", file=sys.stderr)
        return 2
    except AQImputeError as exc:
        print(f"aqimpute: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
