import math

import numpy as np
import pandas as pd
import pytest

from heliocast.clearsky import (
    CSI_CAP,
    calibrate_solis,
    clear_sky_index,
    clear_sky_reference,
    clear_sky_values,
    solis_curve,
    solis_from_elevation,
    solis_irradiance,
    upper_envelope,
)
from heliocast.errors import CalibrationError
from heliocast.schemas import CloudModel, HourlySeries, MinuteSeries, SolisParams
from heliocast.settings import TargetKind
from heliocast.synthetic import gen_days

NOON = int(pd.Timestamp("2013-06-21T11:35", tz="UTC").timestamp())


def test_solis_zenith_and_horizon(solis):
    assert solis_from_elevation(90.0, solis) == pytest.approx(solis.i0_adj * math.exp(-solis.tau))
    assert solis_from_elevation(0.0, solis) == 0.0
    assert solis_from_elevation(-10.0, solis) == 0.0


def test_solis_increases_with_elevation(solis):
    curve = solis_from_elevation(np.linspace(0.5, 90, 500), solis)
    assert np.all(np.diff(curve) > 0)
    assert np.all(curve < solis.i0_adj)


def test_solis_scalar_matches_curve(site, solis):
    epochs = NOON + 600 * np.arange(-20, 20)
    curve = solis_curve(site, solis, epochs)
    assert solis_irradiance(site, solis, int(epochs[7])) == pytest.approx(curve[7])
    assert curve.max() > 800


def test_irradiation_reference_is_trailing_mean(site, solis):
    epochs = np.array([NOON, NOON + 3600 * 4])
    hourly = clear_sky_values(site, solis, epochs, TargetKind.IRRADIATION, step=3600)
    for k, epoch in enumerate(epochs):
        minutes = epoch + 60 * np.arange(-59, 1)
        assert hourly[k] == pytest.approx(solis_curve(site, solis, minutes).mean())
    instant = clear_sky_values(site, solis, epochs, TargetKind.IRRADIANCE, step=3600)
    assert np.allclose(instant, solis_curve(site, solis, epochs))


def test_reference_follows_series_kind(site, solis):
    kw = dict(start_epoch=NOON - NOON % 3600, values=np.zeros(4), valid=np.ones(4, dtype=bool))
    irradiation = HourlySeries(kind=TargetKind.IRRADIATION, **kw)
    irradiance = HourlySeries(kind=TargetKind.IRRADIANCE, **kw)
    assert not np.allclose(
        clear_sky_reference(irradiation, site, solis), clear_sky_reference(irradiance, site, solis)
    )


def _hourly(values, start_epoch, valid=None):
    values = np.asarray(values, dtype=np.float64)
    valid = np.ones(len(values), dtype=bool) if valid is None else valid
    return HourlySeries(
        start_epoch=start_epoch, values=values, valid=valid, kind=TargetKind.IRRADIANCE, ceiling=5000.0
    )


def test_clear_sky_index_floor_and_cap(site, solis):
    start = int(pd.Timestamp("2013-06-21T00:00", tz="UTC").timestamp())
    reference = clear_sky_values(site, solis, start + 3600 * np.arange(24))
    measured = 3.0 * reference
    valid = np.ones(24, dtype=bool)
    valid[12] = False
    csi = clear_sky_index(_hourly(measured, start, valid), site, solis, floor_wm2=20.0)

    assert not csi.valid[0]
    assert not csi.valid[12]
    assert np.array_equal(csi.valid, valid & (reference >= 20.0))
    assert np.all(csi.values[csi.valid] <= CSI_CAP)
    assert csi.values[10] == CSI_CAP


def test_clear_sky_index_ratio(site, solis):
    start = int(pd.Timestamp("2013-06-21T08:00", tz="UTC").timestamp())
    reference = clear_sky_values(site, solis, start + 3600 * np.arange(6))
    csi = clear_sky_index(_hourly(0.4 * reference, start), site, solis, clear_sky=reference)
    assert np.allclose(csi.values, 0.4)


def test_clear_sky_index_rejects_bad_input(site, solis):
    series = _hourly(np.ones(3), NOON - NOON % 3600)
    with pytest.raises(ValueError):
        clear_sky_index(series, site, solis, floor_wm2=0.0)
    with pytest.raises(ValueError):
        clear_sky_index(series, site, solis, clear_sky=np.ones(4))


def test_upper_envelope():
    sin_h = np.array([0.101, 0.105, 0.109, 0.205, 0.201])
    values = np.array([1.0, 3.0, 2.0, 5.0, 7.0])
    x, y = upper_envelope(sin_h, values, 0.01)
    assert list(y) == [3.0, 7.0]
    assert list(x) == [0.105, 0.201]


def _clear_days(site, solis, n_days=20, start_date="2013-05-01"):
    return gen_days(site, solis, CloudModel(regime="clear"), start_date, n_days)


def test_calibration_recovers_parameters(site):
    truth = SolisParams(tau=0.42, g=0.62, i0_adj=1320.0)
    fitted = calibrate_solis(_clear_days(site, truth), site)
    assert fitted.tau == pytest.approx(truth.tau, rel=0.02)
    assert fitted.g == pytest.approx(truth.g, rel=0.02)
    assert fitted.i0_adj == pytest.approx(truth.i0_adj, rel=0.02)


def test_calibration_scales_with_data(site, solis):
    days = _clear_days(site, solis)
    scaled = MinuteSeries(start_epoch=days.start_epoch, values=0.9 * days.values, valid=days.valid)
    fitted = calibrate_solis(scaled, site)
    assert fitted.i0_adj == pytest.approx(0.9 * solis.i0_adj, rel=0.01)
    assert fitted.tau == pytest.approx(solis.tau, rel=0.01)


def test_calibration_needs_daylight(site, minute_series):
    night = int(pd.Timestamp("2013-06-21T21:00", tz="UTC").timestamp())
    with pytest.raises(CalibrationError):
        calibrate_solis(minute_series(np.zeros(240), start_epoch=night), site)
