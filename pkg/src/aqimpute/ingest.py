"""CSV parsing for PM2.5 readings, traffic counts and weather observations.

All inputs are headered UTF-8 CSV with ISO-8601 timestamps. Rows that fail
validation are never dropped silently: each one becomes a :class:`Rejection`
carrying its file line number (the header is line 1).
"""

from __future__ import annotations

import csv
import math
from collections import defaultdict
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path

from .core import GridSpec, RawReading, Source, StationMeta, cell_of, utc
from .errors import EmptyInput, FileUnreadable, OutOfBounds, SchemaMismatch


@dataclass(frozen=True)
class ColumnMap:
    """Names of the reading columns in one provider's CSV.

    ``kind`` optionally names a column whose value ``fixed`` marks a reading
    from a fixed station of the same provider (used for the DPD file, which
    mixes vans and fixed sensors).
    """

    timestamp: str = "timestamp"
    latitude: str = "latitude"
    longitude: str = "longitude"
    pm25: str = "pm25"
    kind: str | None = None

    @classmethod
    def from_dict(cls, d: dict) -> ColumnMap:
        return cls(**d)


DEFAULT_SCHEMAS = {
    "dpd": ColumnMap(kind="sensor_type"),
    "epa": ColumnMap(),
    "google": ColumnMap(),
}

WEATHER_COLUMNS = (
    "precipitation",
    "air_temp",
    "wet_bulb_temp",
    "dew_point_temp",
    "vapour_pressure",
    "relative_humidity",
    "msl_pressure",
)


@dataclass(frozen=True)
class Rejection:
    file: str
    row: int
    reason: str

    def __str__(self) -> str:
        return f"{self.file}:{self.row}: {self.reason}"


@dataclass(frozen=True)
class TrafficHour:
    hour_index: int
    cell: tuple[int, int] | None
    sum_volume: float
    avg_volume: float


@dataclass(frozen=True)
class WeatherHour:
    hour_index: int
    precipitation: float
    air_temp: float
    wet_bulb_temp: float
    dew_point_temp: float
    vapour_pressure: float
    relative_humidity: float
    msl_pressure: float


@dataclass
class ParseResult:
    records: list = field(default_factory=list)
    rejections: list[Rejection] = field(default_factory=list)

    @property
    def n_rows(self) -> int:
        return len(self.records) + len(self.rejections)


def parse_timestamp(text: str) -> datetime:
    text = text.strip()
    if text.endswith("Z"):
        text = text[:-1] + "+00:00"
    return utc(datetime.fromisoformat(text))


def _open_rows(path, required):
    path = Path(path)
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise FileUnreadable(f"cannot read {path}: {exc}") from exc
    with fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [c for c in required if c not in header]
        if missing:
            raise SchemaMismatch(f"{path}: header lacks column(s) {', '.join(missing)}")
        # data rows start on line 2
        yield from enumerate(reader, start=2)


def _number(text: str) -> float:
    value = float(text)
    if not math.isfinite(value):
        raise ValueError("non-finite")
    return value


def parse_readings(
    path,
    source: Source,
    schema: ColumnMap | None = None,
    spec: GridSpec | None = None,
) -> ParseResult:
    """Parse one provider's readings.

    When ``spec`` is given, readings outside its time window are rejected as
    ``out of window``. Spatial filtering is left to gridding because fixed
    stations outside the grid still feed the nearest-station features.
    """
    schema = schema or ColumnMap()
    required = [schema.timestamp, schema.latitude, schema.longitude, schema.pm25]
    if schema.kind:
        required.append(schema.kind)
    result = ParseResult()
    name = str(path)
    for line, row in _open_rows(path, required):
        try:
            ts = parse_timestamp(row[schema.timestamp])
        except (ValueError, TypeError):
            result.rejections.append(Rejection(name, line, "unparseable timestamp"))
            continue
        try:
            lat = _number(row[schema.latitude])
            lon = _number(row[schema.longitude])
        except (ValueError, TypeError):
            result.rejections.append(Rejection(name, line, "unparseable coordinate"))
            continue
        if not (-90.0 <= lat <= 90.0 and -180.0 <= lon <= 180.0):
            result.rejections.append(Rejection(name, line, "coordinate out of range"))
            continue
        try:
            pm25 = float(row[schema.pm25])
        except (ValueError, TypeError):
            result.rejections.append(Rejection(name, line, "unparseable concentration"))
            continue
        if not math.isfinite(pm25):
            result.rejections.append(Rejection(name, line, "non-finite concentration"))
            continue
        if pm25 < 0:
            result.rejections.append(Rejection(name, line, "negative concentration"))
            continue
        if spec is not None and not spec.in_window(ts):
            result.rejections.append(Rejection(name, line, "out of window"))
            continue
        src = source
        if schema.kind and row[schema.kind].strip().lower() == "fixed":
            src = Source.DPD_FIXED if source is Source.DPD_MOBILE else source
        result.records.append(RawReading(src, ts, lat, lon, pm25))
    return result


def parse_weather(path, spec: GridSpec) -> ParseResult:
    """Parse citywide weather, averaging sub-hourly rows into hour buckets."""
    sums: dict[int, list[float]] = {}
    counts: dict[int, int] = defaultdict(int)
    result = ParseResult()
    name = str(path)
    for line, row in _open_rows(path, ("timestamp",) + WEATHER_COLUMNS):
        try:
            ts = parse_timestamp(row["timestamp"])
        except (ValueError, TypeError):
            result.rejections.append(Rejection(name, line, "unparseable timestamp"))
            continue
        try:
            values = [_number(row[c]) for c in WEATHER_COLUMNS]
        except (ValueError, TypeError):
            result.rejections.append(Rejection(name, line, "unparseable number"))
            continue
        if values[0] < 0:
            result.rejections.append(Rejection(name, line, "negative precipitation"))
            continue
        if not 0.0 <= values[5] <= 100.0:
            result.rejections.append(Rejection(name, line, "relative humidity out of range"))
            continue
        if not spec.in_window(ts):
            result.rejections.append(Rejection(name, line, "out of window"))
            continue
        h = spec.hour_index(ts)
        acc = sums.setdefault(h, [0.0] * len(values))
        for i, v in enumerate(values):
            acc[i] += v
        counts[h] += 1
    for h in sorted(sums):
        means = [s / counts[h] for s in sums[h]]
        result.records.append(WeatherHour(h, *means))
    return result


def parse_traffic(path, spec: GridSpec) -> ParseResult:
    """Parse 5-minute traffic counts into hourly per-cell totals.

    Expected columns: ``timestamp, latitude, longitude, volume``. Blank
    coordinates mark a citywide counter (``cell=None``). ``avg_volume`` is
    the hourly total divided by the number of distinct 5-minute intervals
    seen in that hour.
    """
    totals: dict[tuple, float] = defaultdict(float)
    intervals: dict[tuple, set] = defaultdict(set)
    result = ParseResult()
    name = str(path)
    for line, row in _open_rows(path, ("timestamp", "latitude", "longitude", "volume")):
        try:
            ts = parse_timestamp(row["timestamp"])
        except (ValueError, TypeError):
            result.rejections.append(Rejection(name, line, "unparseable timestamp"))
            continue
        try:
            volume = _number(row["volume"])
        except (ValueError, TypeError):
            result.rejections.append(Rejection(name, line, "unparseable number"))
            continue
        if volume < 0:
            result.rejections.append(Rejection(name, line, "negative volume"))
            continue
        cell = None
        if row["latitude"].strip() or row["longitude"].strip():
            try:
                cell = cell_of(_number(row["latitude"]), _number(row["longitude"]), spec)
            except ValueError:
                result.rejections.append(Rejection(name, line, "unparseable coordinate"))
                continue
            except OutOfBounds:
                result.rejections.append(Rejection(name, line, "outside grid"))
                continue
        if not spec.in_window(ts):
            result.rejections.append(Rejection(name, line, "out of window"))
            continue
        offset = (ts - spec.start_time).total_seconds()
        h = int(offset // 3600)
        key = (h, cell)
        totals[key] += volume
        intervals[key].add(int(offset // 300))
    order = sorted(totals, key=lambda k: (k[0], (-1, -1) if k[1] is None else k[1]))
    for key in order:
        total = totals[key]
        result.records.append(TrafficHour(key[0], key[1], total, total / len(intervals[key])))
    return result


def station_catalogue(readings) -> list[StationMeta]:
    """Distinct fixed-station locations, identified by 5-decimal coordinates.

    Ids (``ST000``, ``ST001``, ...) follow the sorted (lat, lon) order so the
    catalogue does not depend on reading order.
    """
    locations: dict[tuple[float, float], Source] = {}
    for r in readings:
        if not r.source.is_fixed:
            raise ValueError(f"station_catalogue expects fixed sources, got {r.source.value}")
        loc = (round(r.latitude, 5), round(r.longitude, 5))
        prev = locations.get(loc)
        if prev is None or r.source.value < prev.value:
            locations[loc] = r.source
    if not locations:
        raise EmptyInput("no fixed-station readings")
    return [
        StationMeta(f"ST{i:03d}", lat, lon, locations[(lat, lon)])
        for i, (lat, lon) in enumerate(sorted(locations))
    ]


def write_readings(path, readings) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["source", "timestamp", "latitude", "longitude", "pm25"])
        for r in readings:
            w.writerow([r.source.value, r.timestamp.isoformat(), repr(r.latitude),
                        repr(r.longitude), repr(r.pm25)])


def read_normalized_readings(path) -> list[RawReading]:
    """Read back a file produced by :func:`write_readings`."""
    out = []
    for _, row in _open_rows(path, ("source", "timestamp", "latitude", "longitude", "pm25")):
        out.append(RawReading(Source(row["source"]), parse_timestamp(row["timestamp"]),
                              float(row["latitude"]), float(row["longitude"]),
                              float(row["pm25"])))
    return out


def write_stations(path, stations) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["station_id", "latitude", "longitude", "source"])
        for s in stations:
            w.writerow([s.station_id, repr(s.latitude), repr(s.longitude), s.source.value])


def read_stations(path) -> list[StationMeta]:
    return [
        StationMeta(row["station_id"], float(row["latitude"]), float(row["longitude"]),
                    Source(row["source"]))
        for _, row in _open_rows(path, ("station_id", "latitude", "longitude", "source"))
    ]


def write_traffic(path, hours) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["hour_index", "row", "col", "sum_volume", "avg_volume"])
        for t in hours:
            row, col = t.cell if t.cell is not None else ("", "")
            w.writerow([t.hour_index, row, col, repr(t.sum_volume), repr(t.avg_volume)])


def read_traffic(path) -> list[TrafficHour]:
    out = []
    for _, row in _open_rows(path, ("hour_index", "row", "col", "sum_volume", "avg_volume")):
        cell = None if row["row"] == "" else (int(row["row"]), int(row["col"]))
        out.append(TrafficHour(int(row["hour_index"]), cell, float(row["sum_volume"]),
                               float(row["avg_volume"])))
    return out


def write_weather(path, hours) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["hour_index", *WEATHER_COLUMNS])
        for wh in hours:
            w.writerow([wh.hour_index] + [repr(getattr(wh, c)) for c in WEATHER_COLUMNS])


def read_weather(path) -> list[WeatherHour]:
    return [
        WeatherHour(int(row["hour_index"]), *(float(row[c]) for c in WEATHER_COLUMNS))
        for _, row in _open_rows(path, ("hour_index",) + WEATHER_COLUMNS)
    ]
