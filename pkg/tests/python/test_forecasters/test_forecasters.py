import numpy as np
import pandas as pd
import pytest

from heliocast.clearsky import clear_sky_reference, clear_sky_values
from heliocast.errors import UnavailableEstimateError
from heliocast.forecasters import (
    ForecastContext,
    Forecasters,
    csi_mlp_forecast,
    lag_index_series,
    mlp_forecast,
    persistence,
    scaled_persistence,
    wm_forecast,
)
from heliocast.mlp import forward, init_model
from heliocast.schemas import HourlySeries
from heliocast.series import hourly_instantaneous, hourly_irradiation
from heliocast.settings import ForecastMethod, TargetKind

JUNE_21 = int(pd.Timestamp("2013-06-21", tz="UTC").timestamp())


@pytest.fixture()
def hourly():
    def _inner(values, start_epoch=JUNE_21, valid=None, kind=TargetKind.IRRADIANCE):
        values = np.asarray(values, dtype=np.float64)
        valid = np.ones(len(values), dtype=bool) if valid is None else valid
        return HourlySeries(start_epoch=start_epoch, values=values, valid=valid, kind=kind)
    yield _inner


@pytest.fixture()
def clear_day(hourly, site, solis):
    yield hourly(clear_sky_values(site, solis, JUNE_21 + 3600 * np.arange(24)))


@pytest.fixture()
def context(synthetic, site, solis):
    def _inner(kind=TargetKind.IRRADIANCE, horizon_s=3600):
        minutes = synthetic("broken", seed=1, start_date="2013-06-01", n_days=3)
        target = hourly_instantaneous(minutes) if kind == TargetKind.IRRADIANCE else hourly_irradiation(minutes)
        return ForecastContext(
            target=target,
            minutes=minutes,
            clear_sky=clear_sky_reference(target, site, solis),
            site=site,
            solis=solis,
            horizon_s=horizon_s,
        )
    yield _inner


def test_persistence(hourly):
    series = hourly([0.0, 120.0, 300.0], valid=[True, True, False])
    assert persistence(series, JUNE_21 + 3600, 3600) == 120.0
    assert persistence(series, JUNE_21 + 3600, 900) == 120.0
    with pytest.raises(UnavailableEstimateError):
        persistence(series, JUNE_21 + 7200, 3600)


def test_scaled_persistence_on_clear_sky(clear_day, site, solis):
    t = JUNE_21 + 3600 * 8
    forecast = scaled_persistence(clear_day, site, solis, t, 3600)
    assert not forecast.fallback
    assert forecast.value == pytest.approx(clear_day.values[9], rel=1e-12)


def test_scaled_persistence_scales_the_index(clear_day, hourly, site, solis):
    cloudy = hourly(0.5 * clear_day.values)
    t = JUNE_21 + 3600 * 10
    assert scaled_persistence(cloudy, site, solis, t, 7200).value == pytest.approx(0.5 * clear_day.values[12])


def test_scaled_persistence_falls_back_at_night(clear_day, site, solis):
    forecast = scaled_persistence(clear_day, site, solis, JUNE_21 + 3600 * 2, 3600)
    assert forecast.fallback
    assert forecast.value == clear_day.values[2]
    evening = scaled_persistence(clear_day, site, solis, JUNE_21 + 3600 * 19, 3600)
    assert evening.fallback and evening.value == pytest.approx(clear_day.values[19])


@pytest.mark.parametrize("horizon_s", [900, 3600])
def test_wm_exact_on_affine(affine_signal, horizon_s):
    series = affine_signal(120.0, 0.04, 200)
    t = 60 * 150
    assert wm_forecast(series, t, horizon_s) == pytest.approx(120.0 + 0.04 * (t + horizon_s), rel=1e-6)


def test_wm_never_negative(affine_signal):
    assert wm_forecast(affine_signal(500.0, -0.05, 200), 60 * 150, 3600) == 0.0


def test_wm_unavailable_without_history(affine_signal):
    with pytest.raises(UnavailableEstimateError):
        wm_forecast(affine_signal(500.0, 0.0, 200), 60 * 30, 3600)


def test_mlp_forecast_reads_last_lags(hourly):
    model = init_model(3, 4, seed=5)
    series = hourly([10.0, 20.0, 30.0, 40.0, 50.0])
    t = JUNE_21 + 3600 * 4
    assert mlp_forecast(model, series, t, 3600) == pytest.approx(forward(model, [30.0, 40.0, 50.0]))
    with pytest.raises(UnavailableEstimateError):
        mlp_forecast(model, series, JUNE_21 + 3600, 3600)
    gappy = hourly([10.0, 20.0, 30.0, 40.0, 50.0], valid=[True, True, False, True, True])
    with pytest.raises(UnavailableEstimateError):
        mlp_forecast(model, gappy, t, 3600)


def test_csi_mlp_scales_by_target_clear_sky(clear_day, site, solis):
    model = init_model(2, 3, seed=1)
    csi = lag_index_series(clear_day, clear_day.values)
    t = JUNE_21 + 3600 * 10
    expected = forward(model, [1.0, 1.0]) * clear_day.values[11]
    assert csi_mlp_forecast(model, csi, site, solis, t, 3600) == pytest.approx(expected)
    with pytest.raises(UnavailableEstimateError):
        csi_mlp_forecast(model, csi, site, solis, JUNE_21 + 3600 * 22, 3600)


def test_lag_index_series(hourly):
    measured = hourly([5.0, 100.0, 300.0, 0.0], valid=[True, True, True, False])
    clear_sky = np.array([10.0, 200.0, 100.0, 400.0])
    csi = lag_index_series(measured, clear_sky, floor_wm2=20.0)
    assert list(csi.valid) == [True, True, True, False]
    assert list(csi.values) == [0.0, 0.5, 2.0, 0.0]


def test_registry_covers_every_method():
    assert set(Forecasters) == set(ForecastMethod)
    assert all(Forecasters[m].method == m for m in ForecastMethod)


@pytest.mark.parametrize("kind", [TargetKind.IRRADIANCE, TargetKind.IRRADIATION])
def test_forecasters_match_point_functions(context, kind):
    ctx = context(kind)
    target = ctx.target
    issues = np.arange(ctx.horizon_steps + 3, len(target) - ctx.horizon_steps)
    model = init_model(3, 4, seed=2, input_scale=1000.0, output_scale=1000.0)
    csi_model = init_model(3, 4, seed=3)
    csi = ctx.csi()

    predictions = {
        method: cls(ctx, model=csi_model if method == ForecastMethod.CSI_MLP else model).predict(issues)
        for method, cls in Forecasters.items()
    }
    point = {
        ForecastMethod.P: lambda t: persistence(target, t, ctx.horizon_s),
        ForecastMethod.SP: lambda t: scaled_persistence(target, ctx.site, ctx.solis, t, ctx.horizon_s).value,
        ForecastMethod.WM: lambda t: wm_forecast(ctx.wm_source(), t, ctx.horizon_s),
        ForecastMethod.MLP: lambda t: mlp_forecast(model, target, t, ctx.horizon_s),
        ForecastMethod.CSI_MLP: lambda t: csi_mlp_forecast(csi_model, csi, ctx.site, ctx.solis, t, ctx.horizon_s),
    }
    for method, prediction in predictions.items():
        assert prediction.valid.any()
        for k, index in enumerate(issues):
            t = int(target.epochs[index])
            try:
                expected = point[method](t)
            except UnavailableEstimateError:
                assert not prediction.valid[k]
                continue
            assert prediction.valid[k], (method, t)
            assert prediction.predicted[k] == pytest.approx(expected, rel=1e-9, abs=1e-9), (method, t)


def test_sp_fallback_flags(context):
    ctx = context()
    issues = np.arange(len(ctx.target) - 1)
    prediction = Forecasters[ForecastMethod.SP](ctx).predict(issues)
    night = ctx.clear_sky[issues] < ctx.floor_wm2
    assert prediction.fallback[night & prediction.valid].all()
    day = (ctx.clear_sky[issues] >= ctx.floor_wm2) & (ctx.clear_sky[issues + 1] >= ctx.floor_wm2)
    assert not prediction.fallback[day].any()
    assert np.all(np.isnan(prediction.predicted[~prediction.valid]))
