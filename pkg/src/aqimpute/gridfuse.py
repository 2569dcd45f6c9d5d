"""Hourly cell binning, multi-source fusion and missing-rate accounting."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .core import CellHourKey, GridSpec, cell_of
from .errors import OutOfBounds, SpecMismatch


@dataclass
class CellHourTable:
    """Sparse map from cell-hour to ``(mean pm25, observation count)``.

    An absent key means the cell-hour is missing.
    """

    spec: GridSpec
    values: dict[CellHourKey, tuple[float, int]] = field(default_factory=dict)
    skipped: int = 0

    def __len__(self) -> int:
        return len(self.values)

    def __contains__(self, key) -> bool:
        return key in self.values

    def mean(self, key) -> float:
        return self.values[key][0]

    def dense(self) -> np.ndarray:
        """Means as a ``(rows, cols, n_hours)`` array with NaN where missing."""
        out = np.full((self.spec.rows, self.spec.cols, self.spec.n_hours), np.nan)
        for k, (m, _) in self.values.items():
            out[k.row, k.col, k.hour_index] = m
        return out

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["row", "col", "hour_index", "mean", "count"])
            for k in sorted(self.values):
                m, c = self.values[k]
                w.writerow([k.row, k.col, k.hour_index, repr(m), c])

    @classmethod
    def from_csv(cls, path, spec: GridSpec) -> CellHourTable:
        table = cls(spec)
        with open(path, newline="", encoding="utf-8") as fh:
            for row in csv.DictReader(fh):
                key = spec.key(int(row["row"]), int(row["col"]), int(row["hour_index"]))
                table.values[key] = (float(row["mean"]), int(row["count"]))
        return table


def accumulate(readings, spec: GridSpec) -> tuple[dict, int]:
    """Per cell-hour reading values plus the number of skipped readings.

    Partials from disjoint reading subsets combine with :func:`combine_partials`
    in any order; :func:`finalize` uses an exactly rounded sum, so the result
    does not depend on the combination schedule.
    """
    partial: dict[CellHourKey, list] = {}
    skipped = 0
    for r in readings:
        h = spec.hour_index(r.timestamp)
        if not 0 <= h < spec.n_hours:
            skipped += 1
            continue
        try:
            row, col = cell_of(r.latitude, r.longitude, spec)
        except OutOfBounds:
            skipped += 1
            continue
        partial.setdefault(CellHourKey(row, col, h), []).append(r.pm25)
    return partial, skipped


def combine_partials(*parts: dict) -> dict:
    out: dict[CellHourKey, list] = {}
    for part in parts:
        for k, vals in part.items():
            out.setdefault(k, []).extend(vals)
    return out


def finalize(partial: dict, spec: GridSpec, skipped: int = 0) -> CellHourTable:
    values = {k: (math.fsum(v) / len(v), len(v)) for k, v in sorted(partial.items())}
    return CellHourTable(spec, values, skipped)


def bin_hourly(readings, spec: GridSpec) -> CellHourTable:
    """Arithmetic mean of the readings in each cell-hour.

    Readings outside the time window or bounding box are counted in
    ``table.skipped``.
    """
    partial, skipped = accumulate(readings, spec)
    return finalize(partial, spec, skipped)


def merge(tables) -> CellHourTable:
    """Fuse sources by the unweighted mean of the per-source cell-hour means.

    Every source counts once regardless of how many observations it had in
    the cell-hour; the merged count is the total observation count.
    """
    tables = list(tables)
    if not tables:
        raise ValueError("merge needs at least one table")
    spec = tables[0].spec
    for t in tables[1:]:
        if t.spec != spec:
            raise SpecMismatch("tables were binned on different grids")
    means: dict[CellHourKey, list] = {}
    counts: dict[CellHourKey, int] = {}
    for t in tables:
        for k, (m, c) in t.values.items():
            means.setdefault(k, []).append(m)
            counts[k] = counts.get(k, 0) + c
    values = {k: (math.fsum(means[k]) / len(means[k]), counts[k]) for k in sorted(means)}
    return CellHourTable(spec, values)


def missing_rate(table: CellHourTable) -> float:
    return 1.0 - len(table.values) / table.spec.n_slots
