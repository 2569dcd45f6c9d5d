from datetime import timedelta

import numpy as np
import pytest

from aqimpute.core import GridSpec, RawReading, Source
from aqimpute.decompose import (
    decompose_additive,
    hourly_average_series,
    moving_average,
    profile,
    write_profile,
)
from aqimpute.errors import TooShort, TooSparse
from aqimpute.gridfuse import CellHourTable, bin_hourly
from aqimpute.synth import SynthConfig, generate

SPEC = GridSpec.dublin()


def test_constant_series():
    d = decompose_additive(np.full(24 * 5, 3.5), 24)
    np.testing.assert_allclose(d.trend, 3.5, atol=1e-12)
    np.testing.assert_allclose(d.seasonal, 0.0, atol=1e-12)
    np.testing.assert_allclose(d.residual, 0.0, atol=1e-12)


def test_pure_sine_has_no_residual():
    t = np.arange(30 * 24)
    d = decompose_additive(np.sin(2 * np.pi * t / 24), 24)
    assert np.abs(d.residual[12:-12]).max() < 1e-6


def test_ramp_plus_weekly_square_wave():
    t = np.arange(10 * 168)
    a = 0.01
    wave = np.where((t % 168) < 84, 1.0, -1.0)
    d = decompose_additive(a * t + wave, 168)
    mid = slice(84, len(t) - 84)
    slope = np.polyfit(t[mid], d.trend[mid], 1)[0]
    assert abs(slope - a) / a < 0.01
    assert np.corrcoef(d.seasonal, wave)[0, 1] > 0.99


def test_reconstruction_with_gaps_and_segments():
    rng = np.random.default_rng(0)
    t = np.arange(24 * 20)
    y = 5 + np.sin(2 * np.pi * t / 24) + 0.1 * rng.standard_normal(len(t))
    y[30:40] = np.nan         # short gap: interpolated
    y[200:260] = np.nan       # long gap: splits the series
    d = decompose_additive(y, 24)
    present = np.isfinite(y)
    np.testing.assert_allclose((d.trend + d.seasonal + d.residual)[present], y[present], atol=1e-9)
    assert np.all(np.isfinite(d.trend[30:40]))
    np.testing.assert_allclose(d.trend[30:40] + d.seasonal[30:40] + d.residual[30:40], d.observed[30:40], atol=1e-9)
    assert np.all(np.isnan(d.trend[200:260]))
    # seasonal phase is tied to the global hour index in both segments
    full = d.seasonal[:200]
    assert abs(full[:24].sum()) < 1e-9
    np.testing.assert_allclose(d.seasonal[264:288], d.seasonal[264 - 240:288 - 240], atol=0.2)


def test_seasonal_invariant_to_offset():
    rng = np.random.default_rng(1)
    y = rng.standard_normal(24 * 6)
    a = decompose_additive(y, 24)
    b = decompose_additive(y + 100.0, 24)
    np.testing.assert_allclose(a.seasonal, b.seasonal, atol=1e-9)
    np.testing.assert_allclose(b.trend - a.trend, 100.0, atol=1e-9)


def test_seasonal_repeats_with_period():
    rng = np.random.default_rng(2)
    d = decompose_additive(rng.standard_normal(24 * 7), 24)
    np.testing.assert_allclose(d.seasonal[24:], d.seasonal[:-24])


def test_errors():
    with pytest.raises(TooShort):
        decompose_additive(np.zeros(47), 24)
    y = np.zeros(100)
    y[::2] = np.nan
    with pytest.raises(TooSparse):
        decompose_additive(y, 24)


def test_moving_average_weights():
    y = np.arange(10.0)
    np.testing.assert_allclose(moving_average(y, 4)[2:-2], y[2:-2])
    np.testing.assert_allclose(moving_average(y, 3)[1:-1], y[1:-1])
    assert np.isnan(moving_average(y, 4)[:2]).all()


def _table(values):
    t = CellHourTable(SPEC)
    for (r, c, h), v in values.items():
        t.values[SPEC.key(r, c, h)] = (v, 1)
    return t


def test_profile_fixture_by_hand():
    # 2022-05-01 is a Sunday
    t = _table({(0, 0, 0): 2.0, (0, 1, 0): 4.0, (1, 1, 1): 5.0, (0, 0, 24): 6.0, (2, 2, 25): 9.0})
    assert profile(t, "hour_of_day") == {0: 4.0, 1: 7.0}
    assert profile(t, "day_of_week") == {0: 7.5, 6: 11.0 / 3}
    s = hourly_average_series(t)
    assert s[0] == 3.0 and s[1] == 5.0 and np.isnan(s[2])


def test_profile_constant_and_errors(tmp_path):
    t = _table({(0, 0, h): 7.0 for h in range(0, 200, 7)})
    assert set(profile(t).values()) == {7.0}
    with pytest.raises(ValueError):
        profile(CellHourTable(SPEC))
    with pytest.raises(ValueError):
        profile(t, "month")
    write_profile(tmp_path / "p.csv", profile(t), "hour_of_day")
    assert (tmp_path / "p.csv").read_text().startswith("hour_of_day,mean_pm25\n")


def test_planted_morning_peak_recovered():
    ds = generate(SynthConfig(seed=4))
    spec = ds.config.spec
    rs = []
    r_i, c_i, h_i = np.nonzero(ds.merged_mask)
    for r, c, h in zip(r_i, c_i, h_i):
        north, west, south, east = spec.cell_bounds(r, c)
        rs.append(RawReading(Source.EPA, spec.hour_start(int(h)) + timedelta(minutes=30),
                             0.5 * (north + south), 0.5 * (west + east), float(ds.pm25[r, c, h])))
    prof = profile(bin_hourly(rs, spec), "hour_of_day")
    assert max(prof, key=prof.get) in (8, 9, 10)
