"""Synthetic multi-source PM2.5 datasets with calibrated coverage.

The latent field is a sum of a static smooth spatial surface, diurnal and
weekly peaks, a slow drift, a citywide autoregressive term, traffic and
weather terms, and small local noise. A monotone piecewise-linear map turns
the latent score into PM2.5 so that the observed cell-hours reproduce the
configured class proportions. Source coverage is drawn as exact sets of
cell-hours, so per-source and merged missing rates are hit by construction.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from datetime import timedelta
from pathlib import Path

import numpy as np

from .core import METRES_PER_DEGREE, GridSpec, N_CLASSES
from .errors import InfeasibleConfig
from .features import AQI_EDGES, labels_of
from .ingest import WEATHER_COLUMNS
from .numcore.rng import make_rng

SOURCES = ("dpd", "epa", "google")


@dataclass(frozen=True)
class SynthConfig:
    """Generator settings.

    ``missing_targets`` are the per-source missing rates in ``SOURCES``
    order; ``merged_target`` is the missing rate of their union. Noise and
    spatial amplitudes are in units of the latent score, whose citywide
    day-to-day component has unit scale.
    """

    spec: GridSpec = field(default_factory=GridSpec.dublin)
    missing_targets: tuple[float, float, float] = (0.8961, 0.9151, 0.9868)
    merged_target: float = 0.8232
    class_priors: tuple[float, ...] = (25901.0, 1227.0, 167.0, 18.0)
    peak_hours: tuple[tuple[int, int], ...] = ((8, 10), (17, 20))
    peak_days: tuple[int, ...] = (1, 6)  # Monday = 0
    noise_scale: float = 0.01
    spatial_scale: float = 0.03
    reading_noise: float = 0.002
    n_epa_inside: int = 6
    n_epa_outside: int = 2
    n_dpd_fixed_inside: int = 3
    n_dpd_fixed: int = 22
    dpd_fixed_uptime: float = 0.5
    n_counters: int = 8
    google_hours: tuple[int, int] = (6, 16)
    seed: int = 0

    def validate(self) -> None:
        for t in (*self.missing_targets, self.merged_target):
            if not 0.0 < t < 1.0:
                raise ValueError(f"missing targets must lie in (0, 1), got {t}")
        if len(self.class_priors) != N_CLASSES or min(self.class_priors) < 0 or sum(self.class_priors) <= 0:
            raise ValueError("class_priors must be 4 non-negative weights with a positive sum")
        if self.n_dpd_fixed_inside > self.n_epa_inside:
            raise ValueError("in-box DPD fixed sensors share EPA cells; need n_dpd_fixed_inside <= n_epa_inside")
        if self.n_epa_inside > self.spec.n_cells:
            raise InfeasibleConfig("more in-box EPA stations than cells")


@dataclass
class SynthDataset:
    """In-memory result; ``write`` emits the CSV files."""

    config: SynthConfig
    pm25: np.ndarray              # (rows, cols, n_hours) ground truth
    score: np.ndarray             # latent score, same shape
    masks: dict[str, np.ndarray]  # per-source coverage, same shape, bool
    readings: dict[str, list]     # source -> list of (hour, minute_s, lat, lon, pm25, kind)
    traffic: list                 # (hour, interval, lat, lon, volume)
    weather: np.ndarray           # (n_hours, len(WEATHER_COLUMNS))
    stations: list                # (provider, lat, lon, inside)

    @property
    def label(self) -> np.ndarray:
        return labels_of(self.pm25)

    @property
    def merged_mask(self) -> np.ndarray:
        return self.masks["dpd"] | self.masks["epa"] | self.masks["google"]

    def missing_rates(self) -> dict[str, float]:
        out = {s: 1.0 - m.mean() for s, m in self.masks.items()}
        out["merged"] = 1.0 - self.merged_mask.mean()
        return out

    def write(self, outdir) -> dict[str, Path]:
        outdir = Path(outdir)
        outdir.mkdir(parents=True, exist_ok=True)
        spec = self.config.spec
        paths = {}
        for src in SOURCES:
            p = outdir / f"{src}.csv"
            with open(p, "w", newline="", encoding="utf-8") as fh:
                w = csv.writer(fh, lineterminator="\n")
                header = ["timestamp", "latitude", "longitude", "pm25"]
                w.writerow(header + (["sensor_type"] if src == "dpd" else []))
                for h, sec, lat, lon, v, kind in self.readings[src]:
                    row = [_iso(spec, h, sec), f"{lat:.6f}", f"{lon:.6f}", f"{v:.4f}"]
                    w.writerow(row + ([kind] if src == "dpd" else []))
            paths[src] = p
        p = outdir / "traffic.csv"
        with open(p, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["timestamp", "latitude", "longitude", "volume"])
            for h, k, lat, lon, vol in self.traffic:
                w.writerow([_iso(spec, h, 300 * k), f"{lat:.6f}", f"{lon:.6f}", int(vol)])
        paths["traffic"] = p
        p = outdir / "weather.csv"
        with open(p, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["timestamp", *WEATHER_COLUMNS])
            for h in range(spec.n_hours):
                w.writerow([_iso(spec, h, 0)] + [f"{v:.3f}" for v in self.weather[h]])
        paths["weather"] = p
        p = outdir / "ground_truth.csv"
        label = self.label
        with open(p, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["row", "col", "hour_index", "pm25", "label"])
            for r in range(spec.rows):
                for c in range(spec.cols):
                    for h in range(spec.n_hours):
                        w.writerow([r, c, h, f"{self.pm25[r, c, h]:.4f}", int(label[r, c, h])])
        paths["ground_truth"] = p
        return paths


def _iso(spec: GridSpec, hour: int, seconds: int) -> str:
    ts = spec.start_time + timedelta(hours=int(hour), seconds=int(seconds))
    return ts.strftime("%Y-%m-%dT%H:%M:%SZ")


# ----------------------------------------------------------------- latent field

def _calendar(spec: GridSpec):
    h = np.arange(spec.n_hours)
    start = spec.start_time
    hod = (start.hour + h) % 24
    wkd = (start.weekday() + (start.hour + h) // 24) % 7
    return hod, wkd


def _bump(x, centre, width, period):
    d = (x - centre + period / 2) % period - period / 2
    return np.exp(-0.5 * (d / width) ** 2)


class _SpatialField:
    """Bilinear interpolation of a coarse Gaussian lattice over an extended box."""

    def __init__(self, spec: GridSpec, rng, margin_km=6.0, step_km=1.0):
        dlat = margin_km * 1000 / METRES_PER_DEGREE
        dlon = dlat / math.cos(math.radians(spec.mid_lat))
        self.lat0 = spec.south_lat - dlat
        self.lon0 = spec.west_lon - dlon
        self.step_lat = step_km * 1000 / METRES_PER_DEGREE
        self.step_lon = self.step_lat / math.cos(math.radians(spec.mid_lat))
        n_lat = int(math.ceil((spec.north_lat + dlat - self.lat0) / self.step_lat)) + 2
        n_lon = int(math.ceil((spec.east_lon + dlon - self.lon0) / self.step_lon)) + 2
        self.grid = rng.standard_normal((n_lat, n_lon))

    def __call__(self, lat, lon):
        y = np.clip((np.asarray(lat) - self.lat0) / self.step_lat, 0, self.grid.shape[0] - 1.001)
        x = np.clip((np.asarray(lon) - self.lon0) / self.step_lon, 0, self.grid.shape[1] - 1.001)
        i, j = np.floor(y).astype(int), np.floor(x).astype(int)
        fy, fx = y - i, x - j
        g = self.grid
        return ((1 - fy) * (1 - fx) * g[i, j] + (1 - fy) * fx * g[i, j + 1]
                + fy * (1 - fx) * g[i + 1, j] + fy * fx * g[i + 1, j + 1])


def _ar1(rng, n, phi, sd):
    e = rng.standard_normal(n) * sd * math.sqrt(1 - phi ** 2)
    out = np.empty(n)
    out[0] = rng.standard_normal() * sd
    for t in range(1, n):
        out[t] = phi * out[t - 1] + e[t]
    return out


def _weather(spec: GridSpec, rng, hod):
    n = spec.n_hours
    days = np.arange(n) / 24.0
    temp = 13 + 4 * np.sin(2 * np.pi * (hod - 9) / 24) + 3 * days / 92 + _ar1(rng, n, 0.98, 2.0)
    rh = np.clip(78 - 12 * np.sin(2 * np.pi * (hod - 9) / 24) + _ar1(rng, n, 0.95, 8.0), 25, 100)
    es = 6.112 * np.exp(17.62 * temp / (243.12 + temp))
    vap = es * rh / 100
    dew = 243.12 * np.log(vap / 6.112) / (17.62 - np.log(vap / 6.112))
    wet = temp - (temp - dew) / 3
    wet_spell = _ar1(rng, n, 0.9, 1.0)
    precip = np.where(wet_spell > 1.0, (wet_spell - 1.0) * 2.0, 0.0)
    msl = 1013 + _ar1(rng, n, 0.995, 8.0)
    cols = dict(precipitation=precip, air_temp=temp, wet_bulb_temp=wet, dew_point_temp=dew,
                vapour_pressure=vap, relative_humidity=rh, msl_pressure=msl)
    return np.stack([cols[c] for c in WEATHER_COLUMNS], axis=1)


def _traffic_profile(hod, wkd):
    weekday = wkd < 5
    prof = 0.15 + _bump(hod, 8.5, 1.2, 24) + 0.9 * _bump(hod, 17.5, 1.5, 24) + 0.5 * _bump(hod, 13, 3, 24)
    return prof * np.where(weekday, 1.0, 0.6)


def _quantile_map(score_obs, score_all, priors):
    """Monotone map from score to PM2.5 placing observed counts in the prior proportions."""
    n = len(score_obs)
    w = np.asarray(priors, float) / float(np.sum(priors))
    raw = w * n
    counts = np.floor(raw).astype(int)
    for i in np.argsort(-(raw - counts), kind="stable")[: n - counts.sum()]:
        counts[i] += 1
    s = np.sort(score_obs)
    lo, hi = float(score_all.min()), float(score_all.max())
    span = hi - lo
    cuts = []
    for c in np.cumsum(counts)[:-1]:
        if c <= 0:
            cuts.append(lo - 1e-3 * span)
        elif c >= n:
            cuts.append(hi + 1e-3 * span)
        else:
            cuts.append(0.5 * (s[c - 1] + s[c]))
    xp = [lo - 1e-6 * span] + cuts + [hi + 1e-6 * span]
    for i in range(1, len(xp)):  # empty classes collapse a bin; keep knots increasing
        xp[i] = max(xp[i], xp[i - 1] + 1e-9 * span)
    fp = [1.0, *AQI_EDGES, 2 * AQI_EDGES[-1]]
    return lambda x: np.interp(x, xp, fp)


# ----------------------------------------------------------------- coverage

def _choose(rng, pool: np.ndarray, k: int, weights=None) -> np.ndarray:
    if k > len(pool):
        raise InfeasibleConfig(f"need {k} cell-hours from a pool of {len(pool)}")
    if k == 0:
        return pool[:0]
    p = None
    if weights is not None:
        p = np.asarray(weights, float)
        p = p / p.sum()
        if np.count_nonzero(p) < k:
            p = None
    return np.sort(rng.choice(pool, size=k, replace=False, p=p))


def _coverage(cfg: SynthConfig, rng, hod, wkd, epa_cells, dpd_cells, van_weight):
    spec = cfg.spec
    R, C, T = spec.rows, spec.cols, spec.n_hours
    n_slots = spec.n_slots
    n_dpd, n_epa, n_goo = (int(round((1 - t) * n_slots)) for t in cfg.missing_targets)
    n_union = int(round((1 - cfg.merged_target) * n_slots))
    flat = lambda r, c, h: (r * C + c) * T + h  # noqa: E731
    hours = np.arange(T)

    # EPA: every hour at its in-box station cells, minus scattered outages
    epa_pool = np.concatenate([flat(r, c, hours) for r, c in epa_cells])
    E = _choose(rng, epa_pool, n_epa)

    # Google: weekday daytime only
    day = np.flatnonzero((wkd < 5) & (hod >= cfg.google_hours[0]) & (hod <= cfg.google_hours[1]))
    goo_pool = (np.arange(R * C)[:, None] * T + day[None, :]).ravel()
    inE = np.isin(goo_pool, E)
    g_lo = max(0, n_epa + n_goo - n_union, n_goo - int((~inE).sum()))
    g_hi = min(n_goo, int(inE.sum()), n_dpd - n_union + n_epa + n_goo)
    if g_lo > g_hi:
        raise InfeasibleConfig("per-source and merged missing targets are incompatible")
    g_e = int(np.clip(round(n_goo * len(epa_cells) / (R * C)), g_lo, g_hi))
    G = np.union1d(_choose(rng, goo_pool[inE], g_e), _choose(rng, goo_pool[~inE], n_goo - g_e))

    EG = np.union1d(E, G)
    d_out = n_union - len(EG)
    d_in = n_dpd - d_out
    if d_out < 0 or d_in < 0 or d_in > len(EG) or d_out > n_slots - len(EG):
        raise InfeasibleConfig("merged missing target cannot be met with these source targets")

    # DPD fixed sensors sit in EPA cells, so their hours count towards the overlap
    fixed_pool = np.concatenate([flat(r, c, hours) for r, c in dpd_cells]) if dpd_cells else np.zeros(0, int)
    fixed_pool = fixed_pool[np.isin(fixed_pool, EG)]
    n_fixed = min(d_in, int(round(cfg.dpd_fixed_uptime * T * len(dpd_cells))), len(fixed_pool))
    D_fixed = _choose(rng, fixed_pool, n_fixed)
    rest_in = np.setdiff1d(EG, D_fixed)
    D_mob_in = _choose(rng, rest_in, d_in - n_fixed)
    outside = np.setdiff1d(np.arange(n_slots), EG)
    w_out = van_weight.ravel()[outside]
    D_mob_out = _choose(rng, outside, d_out, w_out)

    def to_mask(ix):
        m = np.zeros(n_slots, bool)
        m[ix] = True
        return m.reshape(R, C, T)

    masks = {"dpd": to_mask(np.concatenate([D_fixed, D_mob_in, D_mob_out])), "epa": to_mask(E),
             "google": to_mask(G)}
    return masks, to_mask(D_fixed), to_mask(np.concatenate([D_mob_in, D_mob_out]))


# ----------------------------------------------------------------- generator

def _point_in_cell(rng, spec, r, c, n):
    north, west, south, east = spec.cell_bounds(r, c)
    u = rng.uniform(0.05, 0.95, size=(n, 2))
    return north - u[:, 0] * (north - south), west + u[:, 1] * (east - west)


def _ring_point(rng, spec, min_km, max_km):
    """A point outside the box, ``min_km``..``max_km`` beyond its edge."""
    clat, clon = 0.5 * (spec.north_lat + spec.south_lat), 0.5 * (spec.west_lon + spec.east_lon)
    km_lat = 1000 / METRES_PER_DEGREE
    km_lon = km_lat / math.cos(math.radians(spec.mid_lat))
    half_h = (spec.north_lat - spec.south_lat) / 2 / km_lat
    half_w = (spec.east_lon - spec.west_lon) / 2 / km_lon
    ang = rng.uniform(0, 2 * np.pi)
    d = rng.uniform(min_km, max_km)
    # distance to the box edge along the ray, then go further out
    t = min(half_h / max(abs(math.sin(ang)), 1e-9), half_w / max(abs(math.cos(ang)), 1e-9))
    return (round(clat + (t + d) * math.sin(ang) * km_lat, 5),
            round(clon + (t + d) * math.cos(ang) * km_lon, 5))


def generate(config: SynthConfig | None = None) -> SynthDataset:
    """Draw one synthetic dataset; identical output for identical ``config``.

    Raises
    ------
    InfeasibleConfig
        When a coverage target exceeds what the source layout can deliver.
    """
    cfg = config or SynthConfig()
    cfg.validate()
    spec = cfg.spec
    R, C, T = spec.rows, spec.cols, spec.n_hours
    rng = make_rng(cfg.seed, "synth")
    hod, wkd = _calendar(spec)

    # station layout
    cells = rng.permutation(R * C)
    epa_cells = [divmod(int(k), C) for k in cells[: cfg.n_epa_inside]]
    dpd_cells = epa_cells[: cfg.n_dpd_fixed_inside]
    stations = []
    for r, c in epa_cells:
        lat, lon = _point_in_cell(rng, spec, r, c, 1)
        stations.append(("epa", round(lat[0], 5), round(lon[0], 5), (r, c)))
    for r, c in dpd_cells:
        lat, lon = _point_in_cell(rng, spec, r, c, 1)
        stations.append(("dpd", round(lat[0], 5), round(lon[0], 5), (r, c)))
    for _ in range(cfg.n_epa_outside):
        stations.append(("epa", *_ring_point(rng, spec, 0.5, 3.0), None))
    for _ in range(cfg.n_dpd_fixed - cfg.n_dpd_fixed_inside):
        stations.append(("dpd", *_ring_point(rng, spec, 0.3, 5.0), None))

    # citywide temporal components
    temporal = np.zeros(T)
    for i, (lo, hi) in enumerate(cfg.peak_hours):
        amp = 1.0 if i == 0 else 0.7  # the first window is the main peak
        temporal += amp * _bump(hod, 0.5 * (lo + hi), 0.5 * (hi - lo) + 0.6, 24)
    temporal += 0.3 * np.isin(wkd, cfg.peak_days)
    temporal += 0.3 * np.sin(2 * np.pi * np.arange(T) / T)
    temporal += _ar1(rng, T, 0.97, 1.0)
    weather = _weather(spec, rng, hod)
    temporal -= 0.15 * weather[:, WEATHER_COLUMNS.index("precipitation")]
    traffic_city = _traffic_profile(hod, wkd)
    temporal += 0.4 * traffic_city

    spatial = _SpatialField(spec, rng)
    centres = np.array([[spec.cell_bounds(r, c) for c in range(C)] for r in range(R)])
    clat = 0.5 * (centres[..., 0] + centres[..., 2])
    clon = 0.5 * (centres[..., 1] + centres[..., 3])
    cell_sp = cfg.spatial_scale * spatial(clat, clon)
    score = temporal[None, None, :] + cell_sp[..., None] + cfg.noise_scale * rng.standard_normal((R, C, T))

    # traffic counters: in distinct cells, volumes scale with the citywide profile
    counter_cells = [divmod(int(k), C) for k in rng.permutation(R * C)[: cfg.n_counters]]
    counter_pts = [(_point_in_cell(rng, spec, r, c, 1), (r, c)) for r, c in counter_cells]
    counter_scale = rng.uniform(20, 60, size=len(counter_cells))

    van_weight = rng.gamma(2.0, 1.0, size=(R, C))[..., None] * (0.2 + _bump(hod, 12.5, 4.0, 24))[None, None, :]
    masks, dpd_fixed_mask, dpd_mobile_mask = _coverage(cfg, rng, hod, wkd, epa_cells, dpd_cells, van_weight)
    merged = masks["dpd"] | masks["epa"] | masks["google"]
    to_pm = _quantile_map(score[merged], score, cfg.class_priors)
    pm25 = to_pm(score)

    def noisy(v, n=None):
        e = rng.standard_normal(np.shape(v) if n is None else n)
        return np.maximum(v * (1.0 + cfg.reading_noise * e), 0.0)

    readings = {s: [] for s in SOURCES}
    # in-box fixed stations report the value of their cell
    for provider, lat, lon, cell in stations:
        if cell is None:
            continue
        r, c = cell
        m = masks["epa"][r, c] if provider == "epa" else dpd_fixed_mask[r, c]
        hs = np.flatnonzero(m)
        vals = noisy(pm25[r, c, hs])
        secs = rng.integers(0, 3600, size=len(hs))
        kind = "fixed"
        readings[provider] += [(int(h), int(s), lat, lon, float(v), kind) for h, s, v in zip(hs, secs, vals)]
    # out-of-box stations: pointwise field with their own local noise
    for i, (provider, lat, lon, cell) in enumerate(stations):
        if cell is not None:
            continue
        if provider == "epa":
            up = rng.random(T) > 0.01
        else:
            up = _intermittent(rng, T, cfg.dpd_fixed_uptime)
        hs = np.flatnonzero(up)
        s = temporal[hs] + cfg.spatial_scale * spatial(lat, lon) + cfg.noise_scale * rng.standard_normal(len(hs))
        vals = noisy(to_pm(s))
        secs = rng.integers(0, 3600, size=len(hs))
        readings[provider] += [(int(h), int(t), lat, lon, float(v), "fixed") for h, t, v in zip(hs, secs, vals)]
    # mobile sources: 1-3 readings at random points of each covered cell-hour
    for provider, mask in (("dpd", dpd_mobile_mask), ("google", masks["google"])):
        kind = "mobile"
        r_i, c_i, h_i = np.nonzero(mask)
        reps = rng.integers(1, 4, size=len(h_i))
        r_i, c_i, h_i = np.repeat(r_i, reps), np.repeat(c_i, reps), np.repeat(h_i, reps)
        north = spec.north_lat - r_i * spec.cell_dlat
        west = spec.west_lon + c_i * spec.cell_dlon
        south = np.maximum(north - spec.cell_dlat, spec.south_lat)
        east = np.minimum(west + spec.cell_dlon, spec.east_lon)
        u = rng.uniform(0.05, 0.95, size=(len(h_i), 2))
        lat = north - u[:, 0] * (north - south)
        lon = west + u[:, 1] * (east - west)
        vals = noisy(pm25[r_i, c_i, h_i])
        secs = rng.integers(0, 3600, size=len(h_i))
        readings[provider] += [(int(h), int(s), float(a), float(b), float(v), kind)
                               for h, s, a, b, v in zip(h_i, secs, lat, lon, vals)]
    for src in SOURCES:
        readings[src].sort(key=lambda t: (t[0], t[1], t[2], t[3]))

    traffic = []
    intervals = np.arange(12)
    for ((lat, lon), cell), scale in zip(counter_pts, counter_scale):
        rate = scale * np.repeat(traffic_city, 12)
        vol = rng.poisson(rate)
        keep = rng.random(len(vol)) > 0.02  # dropped 5-minute records
        hs = np.repeat(np.arange(T), 12)
        ks = np.tile(intervals, T)
        traffic += [(int(h), int(k), float(lat[0]), float(lon[0]), int(v))
                    for h, k, v, ok in zip(hs, ks, vol, keep) if ok]
    traffic.sort(key=lambda t: (t[0], t[1], t[2], t[3]))

    return SynthDataset(cfg, pm25, score, masks, readings, traffic, weather,
                        [(p, lat, lon, cell is not None) for p, lat, lon, cell in stations])


def _intermittent(rng, n, uptime, mean_run=36):
    """On/off runs with geometric lengths and the given long-run uptime."""
    up = np.zeros(n, bool)
    t = 0
    state = rng.random() < uptime
    while t < n:
        mean = mean_run * (uptime if state else 1 - uptime) * 2
        run = int(rng.geometric(1.0 / max(mean, 1.0)))
        up[t:t + run] = state
        t += run
        state = not state
    return up
