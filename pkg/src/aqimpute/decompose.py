"""Classical additive decomposition and hour/weekday profiles."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .errors import TooShort, TooSparse
from .gridfuse import CellHourTable

MAX_INTERP_GAP = 48


@dataclass
class Decomposition:
    observed: np.ndarray
    trend: np.ndarray
    seasonal: np.ndarray
    residual: np.ndarray
    period: int

    def to_csv(self, path, values=None) -> None:
        """Write ``value, trend, seasonal, residual`` columns (blank where undefined)."""
        values = self.observed if values is None else values

        def fmt(x):
            return "" if not np.isfinite(x) else repr(float(x))

        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["value", "trend", "seasonal", "residual"])
            for row in zip(values, self.trend, self.seasonal, self.residual):
                w.writerow([fmt(x) for x in row])


def moving_average(y: np.ndarray, period: int) -> np.ndarray:
    """Centred moving average; NaN where the window is incomplete.

    Even periods use the 2 x period filter with half weights at both ends.
    """
    if period % 2:
        weights = np.full(period, 1.0 / period)
    else:
        weights = np.full(period + 1, 1.0 / period)
        weights[0] = weights[-1] = 0.5 / period
    half = len(weights) // 2
    out = np.full(len(y), np.nan)
    if len(y) >= len(weights):
        out[half:len(y) - half] = np.convolve(y, weights, mode="valid")
    return out


def _segments(present: np.ndarray, max_gap: int):
    """Index ranges of runs of data separated by gaps longer than ``max_gap``."""
    idx = np.flatnonzero(present)
    if idx.size == 0:
        return []
    breaks = np.flatnonzero(np.diff(idx) > max_gap + 1)
    starts = np.concatenate([[idx[0]], idx[breaks + 1]])
    stops = np.concatenate([idx[breaks], [idx[-1]]]) + 1
    return list(zip(starts.tolist(), stops.tolist()))


def _decompose_segment(y: np.ndarray, offset: int, period: int):
    trend = moving_average(y, period)
    valid = np.isfinite(trend)
    detrended = y - trend
    pos = (np.arange(len(y)) + offset) % period
    means = np.zeros(period)
    for p in range(period):
        sel = valid & (pos == p)
        if sel.any():
            means[p] = detrended[sel].mean()
    means -= means.mean()
    seasonal = means[pos]
    first, last = np.flatnonzero(valid)[[0, -1]]
    trend[:first] = trend[first]
    trend[last + 1:] = trend[last]
    return trend, seasonal


def decompose_additive(series, period: int, max_gap: int = MAX_INTERP_GAP) -> Decomposition:
    """Split an hourly series with gaps into trend + seasonal + residual.

    Gaps up to ``max_gap`` hours are linearly interpolated; longer gaps split
    the series into segments decomposed independently (seasonal phase stays
    tied to the global index). Segments shorter than two periods get a flat
    trend at their mean and no seasonal part. Positions inside long gaps are
    NaN in every component.

    Raises
    ------
    TooShort
        ``len(series) < 2 * period``.
    TooSparse
        Half or more of the series is missing.
    """
    y = np.asarray(series, dtype=float)
    n = len(y)
    if period < 2 or n < 2 * period:
        raise TooShort(f"series of length {n} is shorter than two periods of {period}")
    present = np.isfinite(y)
    if present.mean() <= 0.5:
        raise TooSparse(f"{1 - present.mean():.1%} of the series is missing")

    observed = np.full(n, np.nan)
    trend = np.full(n, np.nan)
    seasonal = np.full(n, np.nan)
    for start, stop in _segments(present, max_gap):
        seg_idx = np.arange(start, stop)
        ok = present[start:stop]
        seg = np.interp(seg_idx, seg_idx[ok], y[start:stop][ok])
        observed[start:stop] = seg
        if stop - start >= 2 * period:
            trend[start:stop], seasonal[start:stop] = _decompose_segment(seg, start, period)
        else:
            trend[start:stop] = seg.mean()
            seasonal[start:stop] = 0.0
    residual = observed - trend - seasonal
    return Decomposition(observed, trend, seasonal, residual, period)


def hourly_average_series(table: CellHourTable) -> np.ndarray:
    """Mean over present cells at each hour; NaN for hours with no data."""
    dense = table.dense()
    counts = np.isfinite(dense).sum(axis=(0, 1))
    sums = np.nansum(dense, axis=(0, 1))
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(counts > 0, sums / np.maximum(counts, 1), np.nan)


def profile(table: CellHourTable, group: str = "hour_of_day") -> dict[int, float]:
    """Unweighted mean PM2.5 over present cell-hours per hour of day or weekday.

    Weekdays count from Monday = 0. Groups with no data are omitted.
    """
    if not table.values:
        raise ValueError("profile needs a non-empty table")
    if group not in ("hour_of_day", "day_of_week"):
        raise ValueError(f"unknown group {group!r}")
    spec = table.spec
    buckets: dict[int, list] = {}
    for key, (mean, _) in table.values.items():
        ts = spec.hour_start(key.hour_index)
        g = ts.hour if group == "hour_of_day" else ts.weekday()
        buckets.setdefault(g, []).append(mean)
    return {g: math.fsum(v) / len(v) for g, v in sorted(buckets.items())}


def write_profile(path, prof: dict[int, float], group: str) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([group, "mean_pm25"])
        for g, v in prof.items():
            w.writerow([g, repr(v)])
