import random
from collections import defaultdict
from datetime import timedelta

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from aqimpute.core import CellHourKey, GridSpec, RawReading, Source
from aqimpute.errors import SpecMismatch
from aqimpute.gridfuse import (
    CellHourTable,
    accumulate,
    bin_hourly,
    combine_partials,
    finalize,
    merge,
    missing_rate,
)

SPEC = GridSpec.dublin()
T0 = SPEC.start_time


def reading(v, lat=53.35, lon=-6.26, minutes=0, src=Source.EPA):
    return RawReading(src, T0 + timedelta(minutes=minutes), lat, lon, v)


def toy_spec(n_hours=6):
    # one row, two columns
    return GridSpec(53.3608, -6.3084, 53.3570, -6.3000, start_time=T0, n_hours=n_hours)


def table(spec, present):
    return CellHourTable(spec, {spec.key(*k): (1.0, 1) for k in present})


def test_single_and_pair():
    t = bin_hourly([reading(7.0)], SPEC)
    assert list(t.values.values()) == [(7.0, 1)]
    t = bin_hourly([reading(10.0), reading(20.0, minutes=59)], SPEC)
    assert list(t.values.values()) == [(15.0, 2)]


def test_skipped_readings_counted():
    rs = [reading(1.0), reading(1.0, lat=50.0), reading(1.0, minutes=-1), reading(1.0, minutes=2208 * 60)]
    t = bin_hourly(rs, SPEC)
    assert len(t) == 1 and t.skipped == 3


def test_thousand_readings_vs_groupby_oracle():
    rnd = random.Random(5)
    rs = []
    for _ in range(1000):
        lat = rnd.uniform(SPEC.south_lat, SPEC.north_lat)
        lon = rnd.uniform(SPEC.west_lon, SPEC.east_lon)
        rs.append(reading(rnd.uniform(0, 80), lat, lon, minutes=rnd.randrange(0, 6 * 60)))
    t = bin_hourly(rs, SPEC)
    groups = defaultdict(list)
    for r in rs:
        row = int((SPEC.north_lat - r.latitude) // SPEC.cell_dlat)
        col = int((r.longitude - SPEC.west_lon) // SPEC.cell_dlon)
        hour = int((r.timestamp - T0).total_seconds() // 3600)
        groups[(min(row, SPEC.rows - 1), min(col, SPEC.cols - 1), hour)].append(r.pm25)
    assert set(t.values) == set(groups)
    for k, vals in groups.items():
        m, c = t.values[k]
        assert c == len(vals)
        assert m == pytest.approx(sum(vals) / len(vals), rel=1e-12)
    assert sum(c for _, c in t.values.values()) == 1000


def test_partials_combine_in_any_order():
    rnd = random.Random(1)
    rs = [reading(rnd.random() * 50, minutes=rnd.randrange(120)) for _ in range(200)]
    whole = bin_hourly(rs, SPEC)
    parts = [accumulate(rs[i::3], SPEC)[0] for i in range(3)]
    for order in ([0, 1, 2], [2, 0, 1], [1, 2, 0]):
        assert finalize(combine_partials(*(parts[i] for i in order)), SPEC).values == whole.values


def test_merge_rules():
    k = SPEC.key(0, 0, 0)
    a = CellHourTable(SPEC, {k: (10.0, 1), SPEC.key(0, 1, 0): (4.0, 2)})
    b = CellHourTable(SPEC, {k: (30.0, 5)})
    m = merge([a, b])
    assert m.values[k] == (20.0, 6)  # unweighted by counts
    assert m.values[SPEC.key(0, 1, 0)] == (4.0, 2)
    assert merge([a]).values == a.values
    assert merge([b, a]).values == m.values
    with pytest.raises(SpecMismatch):
        merge([a, CellHourTable(toy_spec())])


def test_missing_rate_fractions():
    spec = toy_spec()
    assert spec.rows == 1 and spec.cols == 2
    assert missing_rate(CellHourTable(spec)) == 1.0
    assert missing_rate(table(spec, [(0, 0, 0), (0, 1, 3), (0, 0, 5)])) == 0.75


@settings(max_examples=100, deadline=None)
@given(st.lists(st.sets(st.tuples(st.integers(0, 0), st.integers(0, 1), st.integers(0, 5))), min_size=1, max_size=4))
def test_merged_rate_not_above_any_source(sources):
    spec = toy_spec()
    tabs = [table(spec, s) for s in sources]
    merged = merge(tabs)
    assert missing_rate(merged) <= min(missing_rate(t) for t in tabs)
    assert len(merged) == len(set().union(*sources))


def test_dense_and_csv_roundtrip(tmp_path):
    t = bin_hourly([reading(0.1), reading(0.2), reading(3.3, lat=53.34, minutes=61)], SPEC)
    d = t.dense()
    assert d.shape == (7, 10, 2208) and np.isfinite(d).sum() == 2
    t.to_csv(tmp_path / "g.csv")
    assert (tmp_path / "g.csv").read_text().splitlines()[0] == "row,col,hour_index,mean,count"
    assert CellHourTable.from_csv(tmp_path / "g.csv", SPEC).values == t.values
    assert isinstance(next(iter(t.values)), CellHourKey)
