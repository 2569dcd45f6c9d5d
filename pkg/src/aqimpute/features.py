"""Feature-table assembly, AQI labelling, train/test split and model views."""

from __future__ import annotations

import csv
from dataclasses import dataclass, fields

import numpy as np

from .core import MISSING, N_CLASSES, GridSpec, LabelClass, StationMeta, cell_centre, haversine_km
from .errors import NegativeConcentration, NoStations, TooFewRows
from .gridfuse import CellHourTable
from .ingest import WEATHER_COLUMNS, TrafficHour, WeatherHour

# lower bounds of the merged European AQI bands (last two bands combined)
AQI_EDGES = (15.0, 30.0, 55.0)

TABLE_COLUMNS = (
    "wkd", "h", "lat", "lon", "t_sum", "t_avg",
    "w_p", "w_t", "w_w", "w_d", "w_v", "w_r", "w_m",
    "s_dis_1", "s_val_1", "s_dis_2", "s_val_2", "label",
)
WEATHER_FEATURES = ("w_p", "w_t", "w_w", "w_d", "w_v", "w_r", "w_m")
INT_COLUMNS = {"wkd", "h", "lat", "lon", "label"}

STATION_MAX_AGE = 24
WEATHER_MAX_AGE = 3


def label_of(pm25: float) -> int:
    """AQI class of a concentration: [0,15)->0, [15,30)->1, [30,55)->2, >=55->3."""
    if not pm25 >= 0:
        raise NegativeConcentration(f"invalid concentration {pm25}")
    return int(np.searchsorted(AQI_EDGES, pm25, side="right"))


def labels_of(values: np.ndarray) -> np.ndarray:
    """Vectorised :func:`label_of`; NaN maps to ``MISSING``."""
    values = np.asarray(values, dtype=float)
    if np.any(values < 0):
        raise NegativeConcentration("negative concentration in input")
    out = np.searchsorted(AQI_EDGES, values, side="right").astype(np.int64)
    out[np.isnan(values)] = MISSING
    return out


@dataclass(frozen=True)
class FeatureRow:
    """One record in the layout of the processed dataset table."""

    wkd: int
    h: int
    lat_onehot: tuple[int, ...]
    lon_onehot: tuple[int, ...]
    t_sum: float
    t_avg: float
    w_p: float
    w_t: float
    w_w: float
    w_d: float
    w_v: float
    w_r: float
    w_m: float
    s_dis_1: float
    s_val_1: float
    s_dis_2: float
    s_val_2: float
    label: LabelClass


@dataclass
class FeatureTable:
    """Columnar feature table in (row, col, hour) order.

    ``lat``/``lon`` hold the grid row/column; :func:`feature_view` expands
    them into one-hot blocks.
    """

    spec: GridSpec
    wkd: np.ndarray
    h: np.ndarray
    lat: np.ndarray
    lon: np.ndarray
    t_sum: np.ndarray
    t_avg: np.ndarray
    w_p: np.ndarray
    w_t: np.ndarray
    w_w: np.ndarray
    w_d: np.ndarray
    w_v: np.ndarray
    w_r: np.ndarray
    w_m: np.ndarray
    s_dis_1: np.ndarray
    s_val_1: np.ndarray
    s_dis_2: np.ndarray
    s_val_2: np.ndarray
    label: np.ndarray

    def __len__(self) -> int:
        return len(self.label)

    @property
    def hour_index(self) -> np.ndarray:
        return np.tile(np.arange(self.spec.n_hours), self.spec.n_cells)

    @property
    def labeled(self) -> np.ndarray:
        return np.flatnonzero(self.label != MISSING)

    def row(self, i: int) -> FeatureRow:
        onehot = lambda k, n: tuple(int(j == k) for j in range(n))  # noqa: E731
        vals = {c: getattr(self, c)[i].item() for c in TABLE_COLUMNS if c not in ("lat", "lon")}
        vals["label"] = LabelClass(vals["label"])
        return FeatureRow(
            lat_onehot=onehot(int(self.lat[i]), self.spec.rows),
            lon_onehot=onehot(int(self.lon[i]), self.spec.cols),
            **vals,
        )

    def with_labels(self, label: np.ndarray) -> FeatureTable:
        cols = {f.name: getattr(self, f.name) for f in fields(self)}
        cols["label"] = np.asarray(label, dtype=np.int64)
        return FeatureTable(**cols)

    def to_csv(self, path) -> None:
        cols = [getattr(self, c) for c in TABLE_COLUMNS]
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(TABLE_COLUMNS)
            for i in range(len(self)):
                w.writerow([
                    int(col[i]) if name in INT_COLUMNS else repr(float(col[i]))
                    for name, col in zip(TABLE_COLUMNS, cols)
                ])

    @classmethod
    def from_csv(cls, path, spec: GridSpec) -> FeatureTable:
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            if tuple(header) != TABLE_COLUMNS:
                raise ValueError(f"{path}: unexpected header {header}")
            data = np.array(list(reader), dtype=float)
        if len(data) != spec.n_slots:
            raise ValueError(f"{path}: {len(data)} rows, grid has {spec.n_slots} cell-hours")
        cols = {}
        for j, name in enumerate(TABLE_COLUMNS):
            cols[name] = data[:, j].astype(np.int64) if name in INT_COLUMNS else data[:, j]
        return cls(spec=spec, **cols)


def station_series(readings, stations: list[StationMeta], spec: GridSpec) -> np.ndarray:
    """Hourly mean of each station's readings, ``(n_stations, n_hours)``, NaN for gaps."""
    index = {(s.latitude, s.longitude): i for i, s in enumerate(stations)}
    sums = np.zeros((len(stations), spec.n_hours))
    counts = np.zeros((len(stations), spec.n_hours))
    for r in readings:
        i = index.get((round(r.latitude, 5), round(r.longitude, 5)))
        h = spec.hour_index(r.timestamp)
        if i is None or not 0 <= h < spec.n_hours:
            continue
        sums[i, h] += r.pm25
        counts[i, h] += 1
    with np.errstate(invalid="ignore"):
        return np.where(counts > 0, sums / np.where(counts > 0, counts, 1), np.nan)


def fill_gaps(series: np.ndarray, max_age: int) -> np.ndarray:
    """Carry the last value forward up to ``max_age`` hours, else the series mean.

    Operates along the last axis; an all-NaN series stays NaN.
    """
    series = np.asarray(series, dtype=float)
    out = series.copy()
    flat = out.reshape(-1, series.shape[-1])
    src = series.reshape(-1, series.shape[-1])
    n = src.shape[1]
    idx = np.arange(n)
    for k in range(flat.shape[0]):
        ok = np.isfinite(src[k])
        if not ok.any():
            continue
        last = np.maximum.accumulate(np.where(ok, idx, -1))
        age = idx - last
        fill = (last >= 0) & (age <= max_age)
        mean = src[k, ok].mean()
        flat[k] = np.where(ok, src[k], np.where(fill, src[k, np.maximum(last, 0)], mean))
    return out


def nearest_stations(spec: GridSpec, stations: list[StationMeta], usable=None):
    """Indices and km distances of the two nearest stations to every cell centre.

    Ties on distance are broken by station id. Returns arrays of shape
    ``(rows, cols, 2)``.
    """
    usable = np.ones(len(stations), bool) if usable is None else np.asarray(usable, bool)
    cand = [i for i in np.flatnonzero(usable)]
    if len(cand) < 2:
        raise NoStations(f"need two fixed stations with data, have {len(cand)}")
    idx = np.zeros((spec.rows, spec.cols, 2), dtype=np.int64)
    dist = np.zeros((spec.rows, spec.cols, 2))
    for r in range(spec.rows):
        for c in range(spec.cols):
            centre = cell_centre((r, c), spec)
            ranked = sorted(
                (haversine_km(centre, (stations[i].latitude, stations[i].longitude)),
                 stations[i].station_id, i)
                for i in cand
            )
            for j in range(2):
                dist[r, c, j], _, idx[r, c, j] = ranked[j]
    return idx, dist


def _traffic_arrays(traffic: list[TrafficHour], spec: GridSpec, mode: str):
    t_sum = np.zeros((spec.rows, spec.cols, spec.n_hours))
    t_avg = np.zeros_like(t_sum)
    if mode == "cell":
        for t in traffic:
            if t.cell is not None and 0 <= t.hour_index < spec.n_hours:
                t_sum[t.cell[0], t.cell[1], t.hour_index] += t.sum_volume
                t_avg[t.cell[0], t.cell[1], t.hour_index] += t.avg_volume
    elif mode == "citywide":
        s = np.zeros(spec.n_hours)
        a = np.zeros(spec.n_hours)
        n = np.zeros(spec.n_hours)
        for t in traffic:
            if 0 <= t.hour_index < spec.n_hours:
                s[t.hour_index] += t.sum_volume
                a[t.hour_index] += t.avg_volume
                n[t.hour_index] += 1
        nz = np.maximum(n, 1)
        t_sum[:] = s / nz
        t_avg[:] = a / nz
    else:
        raise ValueError(f"unknown traffic mode {mode!r}")
    return t_sum, t_avg


def _weather_arrays(weather: list[WeatherHour], spec: GridSpec) -> np.ndarray:
    raw = np.full((len(WEATHER_COLUMNS), spec.n_hours), np.nan)
    for wh in weather:
        if 0 <= wh.hour_index < spec.n_hours:
            raw[:, wh.hour_index] = [getattr(wh, c) for c in WEATHER_COLUMNS]
    filled = fill_gaps(raw, WEATHER_MAX_AGE)
    return np.nan_to_num(filled, nan=0.0)


def assemble(
    merged: CellHourTable,
    stations: list[StationMeta],
    station_obs: np.ndarray,
    traffic: list[TrafficHour],
    weather: list[WeatherHour],
    spec: GridSpec | None = None,
    traffic_mode: str = "cell",
) -> FeatureTable:
    """Build one feature row per cell-hour, MISSING-labelled where unobserved.

    Parameters
    ----------
    station_obs : ndarray, shape (n_stations, n_hours)
        Hourly station values aligned with ``stations`` (see :func:`station_series`).
    traffic_mode : {"cell", "citywide"}
        ``cell`` joins counters located inside each cell (0 elsewhere);
        ``citywide`` gives every cell the mean over all counters.
    """
    spec = spec or merged.spec
    rows, cols, n_hours = spec.rows, spec.cols, spec.n_hours
    station_obs = np.asarray(station_obs, dtype=float)
    usable = np.isfinite(station_obs).any(axis=1)
    near_idx, near_dist = nearest_stations(spec, stations, usable)
    obs = fill_gaps(station_obs, STATION_MAX_AGE)

    hours = np.arange(n_hours)
    starts = [spec.hour_start(int(h)) for h in hours]
    wkd = np.array([t.weekday() for t in starts])
    hod = np.array([t.hour for t in starts])

    t_sum, t_avg = _traffic_arrays(traffic, spec, traffic_mode)
    wx = _weather_arrays(weather, spec)
    label = labels_of(merged.dense())

    n = rows * cols * n_hours
    rr, cc = np.meshgrid(np.arange(rows), np.arange(cols), indexing="ij")
    per_cell = lambda a: np.repeat(a.reshape(-1), n_hours)  # noqa: E731
    per_hour = lambda a: np.tile(a, rows * cols)  # noqa: E731
    s_i1 = near_idx[..., 0].reshape(-1)
    s_i2 = near_idx[..., 1].reshape(-1)
    cols_out = dict(
        wkd=per_hour(wkd),
        h=per_hour(hod),
        lat=per_cell(rr),
        lon=per_cell(cc),
        t_sum=t_sum.reshape(n),
        t_avg=t_avg.reshape(n),
        s_dis_1=per_cell(near_dist[..., 0]),
        s_val_1=obs[s_i1].reshape(n),
        s_dis_2=per_cell(near_dist[..., 1]),
        s_val_2=obs[s_i2].reshape(n),
        label=label.reshape(n),
    )
    for j, name in enumerate(WEATHER_FEATURES):
        cols_out[name] = per_hour(wx[j])
    return FeatureTable(spec=spec, **cols_out)


def split(labeled: np.ndarray, seed: int, train_fraction: float = 0.8):
    """Uniform random 4:1 split of labelled row indices.

    Returns sorted ``(train, test)`` index arrays.
    """
    labeled = np.asarray(labeled)
    if len(labeled) < 5:
        raise TooFewRows(f"need at least 5 labelled rows, have {len(labeled)}")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(labeled)
    n_train = int(round(train_fraction * len(labeled)))
    return np.sort(perm[:n_train]), np.sort(perm[n_train:])


def view_columns(spec: GridSpec, mode: str) -> list[str]:
    cols = ["wkd", "h"]
    cols += [f"lat_{i}" for i in range(spec.rows)]
    cols += [f"lon_{j}" for j in range(spec.cols)]
    if mode == "wf":
        cols += ["t_sum", "t_avg", *WEATHER_FEATURES, "s_dis_1", "s_val_1", "s_dis_2", "s_val_2"]
    elif mode != "nf":
        raise ValueError(f"unknown feature mode {mode!r}")
    return cols


def onehot_groups(spec: GridSpec) -> list[list[int]]:
    """Column indices of the latitude and longitude one-hot blocks in a view."""
    return [list(range(2, 2 + spec.rows)), list(range(2 + spec.rows, 2 + spec.rows + spec.cols))]


def feature_view(table: FeatureTable, mode: str, index=None) -> np.ndarray:
    """Model input matrix: ``nf`` = time + one-hot cell, ``wf`` adds context.

    The label is never part of a view.
    """
    spec = table.spec
    sel = slice(None) if index is None else np.asarray(index)
    lat = table.lat[sel]
    lon = table.lon[sel]
    n = len(lat)
    parts = [table.wkd[sel][:, None], table.h[sel][:, None]]
    parts.append((lat[:, None] == np.arange(spec.rows)).astype(float))
    parts.append((lon[:, None] == np.arange(spec.cols)).astype(float))
    if mode == "wf":
        for name in ("t_sum", "t_avg", *WEATHER_FEATURES, "s_dis_1", "s_val_1", "s_dis_2", "s_val_2"):
            parts.append(getattr(table, name)[sel][:, None])
    elif mode != "nf":
        raise ValueError(f"unknown feature mode {mode!r}")
    out = np.hstack([p.astype(float) for p in parts]) if n else np.zeros((0, len(view_columns(spec, mode))))
    return out


def write_view(path, table: FeatureTable, mode: str) -> None:
    X = feature_view(table, mode)
    names = view_columns(table.spec, mode)
    int_cols = {"wkd", "h"} | {c for c in names if c.startswith(("lat_", "lon_"))}
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(names + ["label"])
        for i in range(len(X)):
            w.writerow([int(v) if c in int_cols else repr(float(v)) for c, v in zip(names, X[i])]
                       + [int(table.label[i])])


def class_histogram(labels: np.ndarray) -> np.ndarray:
    labels = np.asarray(labels)
    return np.bincount(labels[labels != MISSING], minlength=N_CLASSES)

