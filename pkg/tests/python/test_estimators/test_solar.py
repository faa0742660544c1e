import numpy as np
import pandas as pd
import pytest

from heliocast.schemas import SiteConfig
from heliocast.solar import (
    EPOCH_1950,
    EPOCH_2101,
    daylight_mask,
    refraction,
    solar_angles,
    solar_elevation,
    sun_position,
)


def _day(date: str) -> np.ndarray:
    start = int(pd.Timestamp(date, tz="UTC").timestamp())
    return start + 60 * np.arange(1440, dtype=np.int64)


def _almanac_declination(epoch: int) -> float:
    """Low precision almanac declination, degrees."""
    days = epoch / 86400.0 + 2440587.5 - 2451545.0
    anomaly = np.radians(357.529 + 0.98560028 * days)
    mean_longitude = 280.459 + 0.98564736 * days
    longitude = np.radians(mean_longitude + 1.915 * np.sin(anomaly) + 0.020 * np.sin(2 * anomaly))
    obliquity = np.radians(23.439 - 0.00000036 * days)
    return float(np.degrees(np.arcsin(np.sin(obliquity) * np.sin(longitude))))


@pytest.mark.parametrize("lat, lon", [(48.66, 6.16), (-33.9, 18.4), (10.0, -75.0), (64.1, -21.9), (35.7, 139.7)])
@pytest.mark.parametrize("date", ["2013-03-20", "2013-06-21", "2013-09-23", "2013-12-21"])
def test_noon_elevation(lat, lon, date):
    site = SiteConfig(lat=lat, lon=lon)
    epochs = _day(date)
    elevation = solar_elevation(site, epochs, apply_refraction=False)
    noon = int(np.argmax(elevation))
    expected = 90.0 - abs(lat - _almanac_declination(int(epochs[noon])))
    assert elevation[noon] == pytest.approx(expected, abs=0.5)


def test_noon_follows_longitude_and_equation_of_time(site):
    epochs = _day("2013-02-13")
    angles = solar_angles(site, epochs)
    noon = int(np.argmax(angles.elevation_deg))
    expected_minute = 720 - 4 * site.longitude_deg - angles.eot_minutes[noon]
    assert abs(noon - expected_minute) <= 1.0


@pytest.mark.parametrize("date, expected, tolerance", [
    ("2013-06-21T12:00", 23.44, 0.05),
    ("2013-12-21T12:00", -23.44, 0.05),
    # near the equinox the declination moves 0.4 deg a day
    ("2013-03-20T11:00", 0.0, 0.25),
])
def test_declination_extremes(site, date, expected, tolerance):
    epoch = int(pd.Timestamp(date, tz="UTC").timestamp())
    assert sun_position(site, epoch).declination_deg == pytest.approx(expected, abs=tolerance)


def test_azimuth_sides_of_noon(site):
    morning = int(pd.Timestamp("2013-06-21T08:00", tz="UTC").timestamp())
    afternoon = int(pd.Timestamp("2013-06-21T15:00", tz="UTC").timestamp())
    assert 0 < sun_position(site, morning).azimuth_deg < 180
    assert 180 < sun_position(site, afternoon).azimuth_deg < 360


def test_night_is_below_horizon(site):
    midnight = int(pd.Timestamp("2013-06-21T23:30", tz="UTC").timestamp())
    assert sun_position(site, midnight).elevation_deg < 0


def test_refraction_values():
    assert refraction(90.0) == 0.0
    assert refraction(45.0) == pytest.approx((58.1 - 0.07 + 0.000086) / 3600)
    assert refraction(0.0) == pytest.approx(1735 / 3600)
    assert np.all(refraction(np.linspace(-0.5, 85, 200)) > 0)


def test_refraction_lifts_elevation(site):
    epochs = _day("2013-06-21")
    raw = solar_elevation(site, epochs, apply_refraction=False)
    refracted = solar_elevation(site, epochs)
    assert np.all(refracted >= raw - 1e-12)
    assert np.max(refracted - raw) < 0.6


def test_scalar_matches_vector(site):
    epochs = _day("2013-02-13")[::97]
    angles = solar_angles(site, epochs)
    for k, epoch in enumerate(epochs):
        position = sun_position(site, int(epoch))
        assert position.elevation_deg == pytest.approx(angles.elevation_deg[k])
        assert position.azimuth_deg == pytest.approx(angles.azimuth_deg[k])


@pytest.mark.parametrize("epoch", [EPOCH_1950 - 1, EPOCH_2101])
def test_year_range(site, epoch):
    with pytest.raises(ValueError):
        sun_position(site, epoch)


def test_daylight_mask(site, minute_series):
    epochs = _day("2013-06-21")
    valid = np.ones(len(epochs), dtype=bool)
    valid[720] = False
    ms = minute_series(np.zeros(len(epochs)), start_epoch=int(epochs[0]), valid=valid)
    mask = daylight_mask(site, ms)
    assert not mask[0]
    assert mask[700]
    assert not mask[720]
    assert mask.sum() < (solar_elevation(site, epochs) > 1.0).sum()


@pytest.mark.parametrize("threshold", [-6.0, 25.0])
def test_daylight_threshold_range(site, minute_series, threshold):
    with pytest.raises(ValueError):
        daylight_mask(site, minute_series(np.zeros(10)), threshold)


@pytest.mark.parametrize("lat, lon", [(48.66, 6.16), (-33.9, 18.4), (10.0, -75.0), (64.1, -21.9), (-65.0, 140.0)])
@pytest.mark.parametrize("date", ["2013-01-15", "2013-03-20", "2013-06-21", "2013-10-02"])
def test_elevation_has_one_daily_peak(lat, lon, date):
    site = SiteConfig(lat=lat, lon=lon)
    noon = _day(date)[int(np.argmax(solar_elevation(site, _day(date), apply_refraction=False)))]
    epochs = noon + 60 * np.arange(-660, 661)
    steps = np.sign(np.diff(solar_elevation(site, epochs, apply_refraction=False)))
    steps = steps[steps != 0]
    assert steps[0] > 0 and steps[-1] < 0
    assert np.count_nonzero(np.diff(steps)) == 1


def test_declination_stays_within_obliquity(site):
    epochs = _day("2013-01-01")[720] + 86400 * np.arange(365)
    decl = solar_angles(site, epochs).declination_deg
    assert np.all(np.abs(decl) <= 23.45 + 1e-9)
    assert np.count_nonzero(np.diff(np.sign(decl))) == 2


def test_daylight_mask_shrinks_with_threshold(site, minute_series):
    epochs = _day("2013-04-10")
    rng = np.random.default_rng(6)
    ms = minute_series(np.zeros(len(epochs)), start_epoch=int(epochs[0]), valid=rng.random(len(epochs)) > 0.1)
    masks = [daylight_mask(site, ms, threshold) for threshold in np.linspace(-5.0, 20.0, 11)]
    for looser, stricter in zip(masks, masks[1:]):
        assert not np.any(stricter & ~looser)
    assert masks[0].sum() > masks[-1].sum()


@pytest.mark.parametrize("threshold", [-5.0, 0.0, 1.0, 7.5, 20.0])
def test_daylight_mask_is_elevation_and_validity(site, minute_series, threshold):
    epochs = _day("2013-11-03")
    valid = np.ones(len(epochs), dtype=bool)
    valid[::7] = False
    ms = minute_series(np.zeros(len(epochs)), start_epoch=int(epochs[0]), valid=valid)
    expected = (solar_elevation(site, epochs) > threshold) & valid
    assert np.array_equal(daylight_mask(site, ms, threshold), expected)


def test_civil_twilight_counts_at_lowest_threshold(site, minute_series):
    epochs = _day("2013-09-23")
    ms = minute_series(np.zeros(len(epochs)), start_epoch=int(epochs[0]))
    elevation = solar_elevation(site, epochs)
    twilight = (elevation > -5.0) & (elevation < 0.0)
    assert twilight.any()
    assert daylight_mask(site, ms, -5.0)[twilight].all()


def test_june_day_length(site, minute_series):
    epochs = _day("2013-06-21")
    ms = minute_series(np.zeros(len(epochs)), start_epoch=int(epochs[0]))
    minutes = daylight_mask(site, ms, 0.0).sum()
    assert 15 * 60 <= minutes <= 17 * 60
