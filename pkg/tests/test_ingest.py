from datetime import datetime, timezone

import pytest

from aqimpute.core import GridSpec, Source
from aqimpute.errors import EmptyInput, FileUnreadable, SchemaMismatch
from aqimpute.ingest import (
    DEFAULT_SCHEMAS,
    WEATHER_COLUMNS,
    ColumnMap,
    parse_readings,
    parse_traffic,
    parse_weather,
    read_normalized_readings,
    read_stations,
    read_traffic,
    read_weather,
    station_catalogue,
    write_readings,
    write_stations,
    write_traffic,
    write_weather,
)
from aqimpute.synth import SynthConfig, generate

SPEC = GridSpec.dublin()

TEN_ROWS = """timestamp,latitude,longitude,pm25
2022-05-01T00:10:00Z,53.35,-6.26,4.5
2022-05-01T00:20:00Z,53.35,-6.26,5.5
2022-05-01T01:00:00+01:00,53.34,-6.27,7.0
2022-05-02T10:00:00,53.34,-6.27,12.25
not-a-time,53.34,-6.27,3.0
2022-05-03T10:00:00Z,53.33,-6.25,0
2022-05-03T11:00:00Z,53.33,-6.25,-1
2022-05-03T12:00:00Z,50.0,-6.25,2.0
2022-07-31T23:59:59Z,53.36,-6.30,9.0
2022-06-15T08:30:00Z,53.3301,-6.2404,30.0
"""


def write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text, encoding="utf-8")
    return p


def test_ten_row_fixture(tmp_path):
    res = parse_readings(write(tmp_path, "epa.csv", TEN_ROWS), Source.EPA, spec=SPEC)
    assert len(res.records) == 8
    assert [(r.row, r.reason) for r in res.rejections] == [
        (6, "unparseable timestamp"),
        (8, "negative concentration"),
    ]
    assert res.n_rows == 10
    # the +01:00 row is midnight UTC
    assert res.records[2].timestamp == datetime(2022, 5, 1, 0, tzinfo=timezone.utc)
    assert str(res.rejections[1]).endswith("epa.csv:8: negative concentration")
    # out-of-box points are kept; spatial filtering happens at gridding
    assert any(r.latitude == 50.0 for r in res.records)


def test_rejection_reasons(tmp_path):
    text = ("timestamp,latitude,longitude,pm25\n"
            "2022-05-01T00:00:00Z,x,-6.26,1\n"
            "2022-05-01T00:00:00Z,91,-6.26,1\n"
            "2022-05-01T00:00:00Z,53.35,-6.26,abc\n"
            "2022-05-01T00:00:00Z,53.35,-6.26,nan\n"
            "2022-04-30T23:59:59Z,53.35,-6.26,1\n"
            "2022-08-01T00:00:00Z,53.35,-6.26,1\n")
    res = parse_readings(write(tmp_path, "g.csv", text), Source.GOOGLE, spec=SPEC)
    assert res.records == []
    assert [r.reason for r in res.rejections] == [
        "unparseable coordinate", "coordinate out of range", "unparseable concentration",
        "non-finite concentration", "out of window", "out of window",
    ]


def test_empty_file_and_errors(tmp_path):
    res = parse_readings(write(tmp_path, "e.csv", "timestamp,latitude,longitude,pm25\n"), Source.EPA)
    assert res.records == [] and res.rejections == []
    with pytest.raises(SchemaMismatch):
        parse_readings(write(tmp_path, "bad.csv", "time,latitude,longitude,pm25\n"), Source.EPA)
    with pytest.raises(FileUnreadable):
        parse_readings(tmp_path / "nope.csv", Source.EPA)


def test_custom_schema_and_sensor_type(tmp_path):
    text = ("when,y,x,val,sensor_type\n"
            "2022-05-01T00:00:00Z,53.35,-6.26,1,fixed\n"
            "2022-05-01T00:00:00Z,53.35,-6.26,2,mobile\n")
    schema = ColumnMap("when", "y", "x", "val", kind="sensor_type")
    res = parse_readings(write(tmp_path, "d.csv", text), Source.DPD_MOBILE, schema)
    assert [r.source for r in res.records] == [Source.DPD_FIXED, Source.DPD_MOBILE]
    assert ColumnMap.from_dict({"pm25": "v"}).pm25 == "v"


def test_parse_is_deterministic(tmp_path):
    p = write(tmp_path, "epa.csv", TEN_ROWS)
    assert parse_readings(p, Source.EPA, spec=SPEC) == parse_readings(p, Source.EPA, spec=SPEC)


def test_traffic_constant_hour_and_absent_hours(tmp_path):
    rows = ["timestamp,latitude,longitude,volume"]
    rows += [f"2022-05-01T03:{5 * k:02d}:00Z,53.35,-6.26,7" for k in range(12)]
    rows += ["2022-05-01T05:00:00Z,,,10", "2022-05-01T05:05:00Z,,,20", "2022-05-01T05:05:00Z,,,30"]
    rows += ["2022-05-01T06:00:00Z,53.35,-6.26,-3", "2022-05-01T06:00:00Z,50.0,-6.26,3"]
    res = parse_traffic(write(tmp_path, "t.csv", "\n".join(rows) + "\n"), SPEC)
    assert len(res.records) == 2
    cell_hour, city = res.records
    assert (cell_hour.hour_index, cell_hour.sum_volume, cell_hour.avg_volume) == (3, 84.0, 7.0)
    assert cell_hour.cell is not None
    # three rows over two distinct 5-minute intervals
    assert (city.hour_index, city.cell, city.sum_volume, city.avg_volume) == (5, None, 60.0, 30.0)
    assert [r.reason for r in res.rejections] == ["negative volume", "outside grid"]
    assert all(t.hour_index != 4 for t in res.records)


def test_weather_hour_means(tmp_path):
    header = "timestamp," + ",".join(WEATHER_COLUMNS)
    rows = [header,
            "2022-05-01T00:00:00Z,0.0,10.0,8.0,6.0,9.0,80,1010",
            "2022-05-01T00:30:00Z,1.0,12.0,9.0,7.0,10.0,90,1012",
            "2022-05-01T02:00:00Z,0.5,14.0,10.0,8.0,11.0,70,1014",
            "2022-05-01T03:00:00Z,-0.5,14.0,10.0,8.0,11.0,70,1014",
            "2022-05-01T03:00:00Z,0.0,14.0,10.0,8.0,11.0,101,1014"]
    res = parse_weather(write(tmp_path, "w.csv", "\n".join(rows) + "\n"), SPEC)
    assert [w.hour_index for w in res.records] == [0, 2]
    w0 = res.records[0]
    assert (w0.precipitation, w0.air_temp, w0.relative_humidity, w0.msl_pressure) == (0.5, 11.0, 85.0, 1011.0)
    assert [r.reason for r in res.rejections] == ["negative precipitation", "relative humidity out of range"]


def test_station_catalogue():
    t = SPEC.start_time
    from aqimpute.core import RawReading
    a = RawReading(Source.EPA, t, 53.350001, -6.26, 1.0)
    b = RawReading(Source.EPA, t, 53.350004, -6.26, 2.0)  # ~0.3 m away: same station
    c = RawReading(Source.DPD_FIXED, t, 53.34, -6.27, 2.0)
    cat = station_catalogue([a, b, c])
    assert [(s.station_id, s.latitude, s.source) for s in cat] == [
        ("ST000", 53.34, Source.DPD_FIXED), ("ST001", 53.35, Source.EPA)]
    assert station_catalogue([c, b, a]) == cat
    with pytest.raises(EmptyInput):
        station_catalogue([])
    with pytest.raises(ValueError):
        station_catalogue([RawReading(Source.GOOGLE, t, 53.35, -6.26, 1.0)])


def test_synthetic_station_count(tmp_path):
    ds = generate(SynthConfig(seed=2))
    paths = ds.write(tmp_path)
    fixed = []
    for name, src in (("dpd", Source.DPD_MOBILE), ("epa", Source.EPA)):
        res = parse_readings(paths[name], src, DEFAULT_SCHEMAS[name], SPEC)
        assert res.rejections == []
        fixed += [r for r in res.records if r.source.is_fixed]
    assert len(station_catalogue(fixed)) == 22 + 8


def test_normalized_roundtrips(tmp_path):
    res = parse_readings(write(tmp_path, "epa.csv", TEN_ROWS), Source.EPA, spec=SPEC)
    write_readings(tmp_path / "r.csv", res.records)
    assert read_normalized_readings(tmp_path / "r.csv") == res.records
    cat = station_catalogue(res.records)
    write_stations(tmp_path / "s.csv", cat)
    assert read_stations(tmp_path / "s.csv") == cat
    rows = ["timestamp,latitude,longitude,volume", "2022-05-01T00:00:00Z,,,5",
            "2022-05-01T00:00:00Z,53.35,-6.26,7"]
    tr = parse_traffic(write(tmp_path, "t.csv", "\n".join(rows) + "\n"), SPEC).records
    write_traffic(tmp_path / "th.csv", tr)
    assert read_traffic(tmp_path / "th.csv") == tr
    header = "timestamp," + ",".join(WEATHER_COLUMNS)
    wx = parse_weather(write(tmp_path, "w.csv", header + "\n2022-05-01T00:00:00Z,0,1,2,3,4,5,6\n"), SPEC).records
    write_weather(tmp_path / "wh.csv", wx)
    assert read_weather(tmp_path / "wh.csv") == wx
