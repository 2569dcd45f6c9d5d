from datetime import datetime, timezone

import numpy as np
import pytest

from aqimpute.core import GridSpec
from aqimpute.errors import InfeasibleConfig
from aqimpute.features import labels_of
from aqimpute.synth import SynthConfig, generate


@pytest.fixture(scope="module")
def full_ds():
    return generate(SynthConfig(seed=11))


def small_spec():
    return GridSpec(53.3608, -6.3084, 53.3430, -6.2800, start_time=datetime(2022, 5, 2, tzinfo=timezone.utc),
                    n_hours=24 * 14)


def test_calibrated_targets_hit(full_ds):
    rates = full_ds.missing_rates()
    assert abs(rates["dpd"] - 0.8961) <= 0.005
    assert abs(rates["epa"] - 0.9151) <= 0.005
    assert abs(rates["google"] - 0.9868) <= 0.005
    assert abs(rates["merged"] - 0.8232) <= 0.01
    assert rates["merged"] <= min(rates["dpd"], rates["epa"], rates["google"])


def test_class_histogram_near_priors(full_ds):
    obs = full_ds.label[full_ds.merged_mask]
    got = np.bincount(obs, minlength=4)
    prior = np.array([25901, 1227, 167, 18], float)
    expected = prior / prior.sum() * len(obs)
    assert np.all(np.abs(got - expected) <= 0.1 * expected)


def test_ground_truth_complete(full_ds):
    assert full_ds.pm25.shape == (7, 10, 2208)
    assert np.all(np.isfinite(full_ds.pm25)) and full_ds.pm25.min() >= 0
    np.testing.assert_array_equal(full_ds.label, labels_of(full_ds.pm25))


def test_hourly_mean_peaks_inside_windows(full_ds):
    hod = np.arange(2208) % 24
    prof = np.array([full_ds.pm25[..., hod == h].mean() for h in range(24)])
    local_max = [h for h in range(24) if prof[h] > prof[(h - 1) % 24] and prof[h] > prof[(h + 1) % 24]]
    assert any(8 <= h <= 10 for h in local_max)
    assert any(17 <= h <= 20 for h in local_max)


def test_google_weekday_daytime_only(full_ds):
    spec = full_ds.config.spec
    for h, *_ in full_ds.readings["google"]:
        t = spec.hour_start(h)
        assert t.weekday() < 5 and 6 <= t.hour <= 16


def test_write_is_deterministic(tmp_path):
    cfg = SynthConfig(spec=small_spec(), seed=3, missing_targets=(0.8, 0.85, 0.97), merged_target=0.72)
    a = generate(cfg).write(tmp_path / "a")
    b = generate(cfg).write(tmp_path / "b")
    for name in a:
        assert a[name].read_bytes() == b[name].read_bytes(), name
    header = a["ground_truth"].read_text().splitlines()[0]
    assert header == "row,col,hour_index,pm25,label"
    assert a["dpd"].read_text().splitlines()[0] == "timestamp,latitude,longitude,pm25,sensor_type"


def test_different_seeds_differ():
    cfg = SynthConfig(spec=small_spec(), missing_targets=(0.8, 0.85, 0.97), merged_target=0.72)
    a = generate(cfg)
    b = generate(SynthConfig(**{**cfg.__dict__, "seed": 1}))
    assert not np.array_equal(a.pm25, b.pm25)


@pytest.mark.parametrize("targets, merged", [
    ((0.9, 0.5, 0.98), 0.45),      # EPA needs more hours than its stations have
    ((0.9, 0.9, 0.0001), 0.0001),  # mobile Google cannot cover nights and weekends
    ((0.9, 0.92, 0.98), 0.95),     # union smaller than a single source
])
def test_infeasible_targets(targets, merged):
    with pytest.raises(InfeasibleConfig):
        generate(SynthConfig(missing_targets=targets, merged_target=merged))


def test_invalid_config():
    with pytest.raises(ValueError):
        generate(SynthConfig(missing_targets=(0.0, 0.9, 0.9)))
    with pytest.raises(ValueError):
        generate(SynthConfig(class_priors=(0, 0, 0, 0)))
