"""Domain types, the cell-hour grid and great-circle distance."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from datetime import datetime, timedelta, timezone
from typing import NamedTuple

from .errors import OutOfBounds

EARTH_RADIUS_KM = 6371.0
METRES_PER_DEGREE = 111_320.0

DUBLIN_BOUNDS = (53.3608, -6.3084, 53.3295, -6.2403)  # north, west, south, east
DUBLIN_START = datetime(2022, 5, 1, tzinfo=timezone.utc)
DUBLIN_HOURS = 92 * 24


class Source(str, enum.Enum):
    DPD_MOBILE = "DPD_MOBILE"
    DPD_FIXED = "DPD_FIXED"
    EPA = "EPA"
    GOOGLE = "GOOGLE"

    @property
    def is_fixed(self) -> bool:
        return self in (Source.DPD_FIXED, Source.EPA)

    @property
    def provider(self) -> str:
        """Dataset the source belongs to (``dpd``, ``epa`` or ``google``)."""
        return self.value.split("_")[0].lower()


class LabelClass(enum.IntEnum):
    """Merged four-level PM2.5 scale; ``MISSING`` marks unobserved cell-hours."""

    MISSING = -1
    VERY_LOW = 0
    LOW = 1
    MEDIUM = 2
    HIGH = 3


MISSING = int(LabelClass.MISSING)
N_CLASSES = 4


def utc(ts: datetime) -> datetime:
    """Return ``ts`` as an aware UTC instant; naive values are taken as UTC."""
    if ts.tzinfo is None:
        return ts.replace(tzinfo=timezone.utc)
    return ts.astimezone(timezone.utc)


@dataclass(frozen=True)
class RawReading:
    source: Source
    timestamp: datetime
    latitude: float
    longitude: float
    pm25: float

    def __post_init__(self):
        if not -90.0 <= self.latitude <= 90.0:
            raise ValueError(f"latitude out of range: {self.latitude}")
        if not -180.0 <= self.longitude <= 180.0:
            raise ValueError(f"longitude out of range: {self.longitude}")
        if not math.isfinite(self.pm25) or self.pm25 < 0:
            raise ValueError(f"invalid pm25: {self.pm25}")


@dataclass(frozen=True)
class StationMeta:
    station_id: str
    latitude: float
    longitude: float
    source: Source


class CellHourKey(NamedTuple):
    row: int
    col: int
    hour_index: int


@dataclass(frozen=True)
class GridSpec:
    """Regular grid of ``cell_size`` metre cells anchored at the north-west corner.

    Cells are ``cell_size`` metres tall and wide (degree sizes use the
    bounding box's mid-latitude), so the last row and column may overhang
    the south and east edges. Only points inside the bounding box are
    gridded.
    """

    north_lat: float
    west_lon: float
    south_lat: float
    east_lon: float
    cell_size: float = 500.0
    start_time: datetime = DUBLIN_START
    n_hours: int = DUBLIN_HOURS

    def __post_init__(self):
        if not self.north_lat > self.south_lat:
            raise ValueError("north_lat must exceed south_lat")
        if not self.east_lon > self.west_lon:
            raise ValueError("east_lon must exceed west_lon")
        if self.cell_size <= 0 or self.n_hours <= 0:
            raise ValueError("cell_size and n_hours must be positive")
        object.__setattr__(self, "start_time", utc(self.start_time))

    @classmethod
    def dublin(cls, cell_size: float = 500.0) -> GridSpec:
        return cls(*DUBLIN_BOUNDS, cell_size=cell_size)

    @property
    def mid_lat(self) -> float:
        return 0.5 * (self.north_lat + self.south_lat)

    @property
    def cell_dlat(self) -> float:
        return self.cell_size / METRES_PER_DEGREE

    @property
    def cell_dlon(self) -> float:
        return self.cell_size / (METRES_PER_DEGREE * math.cos(math.radians(self.mid_lat)))

    @property
    def rows(self) -> int:
        span = (self.north_lat - self.south_lat) * METRES_PER_DEGREE
        return max(1, math.ceil(span / self.cell_size - 1e-9))

    @property
    def cols(self) -> int:
        span = (self.east_lon - self.west_lon) * METRES_PER_DEGREE * math.cos(
            math.radians(self.mid_lat)
        )
        return max(1, math.ceil(span / self.cell_size - 1e-9))

    @property
    def n_cells(self) -> int:
        return self.rows * self.cols

    @property
    def n_slots(self) -> int:
        return self.n_cells * self.n_hours

    def contains(self, lat: float, lon: float) -> bool:
        return self.south_lat <= lat <= self.north_lat and self.west_lon <= lon <= self.east_lon

    def cell_bounds(self, row: int, col: int) -> tuple[float, float, float, float]:
        """(north, west, south, east) of a cell, clipped to the bounding box."""
        north = self.north_lat - row * self.cell_dlat
        west = self.west_lon + col * self.cell_dlon
        south = max(north - self.cell_dlat, self.south_lat)
        east = min(west + self.cell_dlon, self.east_lon)
        return north, west, south, east

    def hour_index(self, ts: datetime) -> int:
        """Hour slot of ``ts``; may fall outside ``[0, n_hours)``."""
        return math.floor((utc(ts) - self.start_time).total_seconds() / 3600.0)

    def hour_start(self, hour_index: int) -> datetime:
        return self.start_time + timedelta(hours=hour_index)

    def in_window(self, ts: datetime) -> bool:
        return 0 <= self.hour_index(ts) < self.n_hours

    def key(self, row: int, col: int, hour_index: int) -> CellHourKey:
        if not (0 <= row < self.rows and 0 <= col < self.cols and 0 <= hour_index < self.n_hours):
            raise OutOfBounds(f"key ({row}, {col}, {hour_index}) outside grid")
        return CellHourKey(row, col, hour_index)

    def flat_index(self, key: CellHourKey) -> int:
        """Position of ``key`` in (row, col, hour) order."""
        return (key.row * self.cols + key.col) * self.n_hours + key.hour_index

    def to_dict(self) -> dict:
        return {
            "north_lat": self.north_lat,
            "west_lon": self.west_lon,
            "south_lat": self.south_lat,
            "east_lon": self.east_lon,
            "cell_size": self.cell_size,
            "start_time": self.start_time.isoformat(),
            "n_hours": self.n_hours,
        }

    @classmethod
    def from_dict(cls, d: dict) -> GridSpec:
        d = dict(d)
        d["start_time"] = datetime.fromisoformat(d["start_time"])
        return cls(**d)


def cell_of(lat: float, lon: float, spec: GridSpec) -> tuple[int, int]:
    """Return ``(row, col)`` of the cell containing a point.

    Raises
    ------
    OutOfBounds
        If the point lies outside the bounding box.
    """
    if not spec.contains(lat, lon):
        raise OutOfBounds(f"({lat}, {lon}) outside grid bounding box")
    row = min(int(math.floor((spec.north_lat - lat) / spec.cell_dlat)), spec.rows - 1)
    col = min(int(math.floor((lon - spec.west_lon) / spec.cell_dlon)), spec.cols - 1)
    return row, col


def cell_centre(key: CellHourKey | tuple[int, int], spec: GridSpec) -> tuple[float, float]:
    """Midpoint (lat, lon) of the in-box part of a cell."""
    row, col = key[0], key[1]
    if not (0 <= row < spec.rows and 0 <= col < spec.cols):
        raise OutOfBounds(f"cell ({row}, {col}) outside grid")
    north, west, south, east = spec.cell_bounds(row, col)
    return 0.5 * (north + south), 0.5 * (west + east)


def haversine_km(a: tuple[float, float], b: tuple[float, float]) -> float:
    """Great-circle distance in km between two (lat, lon) points on a sphere."""
    lat1, lon1 = map(math.radians, a)
    lat2, lon2 = map(math.radians, b)
    h = (
        math.sin((lat2 - lat1) / 2.0) ** 2
        + math.cos(lat1) * math.cos(lat2) * math.sin((lon2 - lon1) / 2.0) ** 2
    )
    return 2.0 * EARTH_RADIUS_KM * math.asin(min(1.0, math.sqrt(h)))
