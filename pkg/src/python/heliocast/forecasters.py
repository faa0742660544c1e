"""
The five predictors.

Each predictor exists twice: a point function working on one issue time, and a
:py:class:`Forecaster` that evaluates many issue slots of a prepared
:py:class:`ForecastContext` at once. Both share the same semantics; the
benchmark uses the forecasters.
"""
from typing import NamedTuple, Optional, Type

import numpy as np
from loguru import logger
from pydantic import BaseModel, ConfigDict

from heliocast.clearsky import clear_sky_values
from heliocast.errors import UnavailableEstimateError
from heliocast.mlp import forward, lag_matrix, lags_available, predict
from heliocast.schemas import (
    ClearSkyIndexSeries,
    HourlySeries,
    MinuteSeries,
    MlpModel,
    Series,
    SiteConfig,
    SolisParams,
)
from heliocast.series import running_mean
from heliocast.settings import MIN_VALID_MINUTES, ForecastMethod, TargetKind
from heliocast.trend import DERIVATIVE_WINDOW_S, TREND_WINDOW_S, trend, trend_derivative

DEFAULT_FLOOR_WM2 = 20.0


class PointForecast(NamedTuple):
    value: float
    fallback: bool = False


def _unavailable(msg: str):
    logger.debug(msg)
    raise UnavailableEstimateError(msg)


def _value(series: Series, epoch: int) -> float:
    value = series.value_at(epoch)
    if value is None:
        _unavailable(f"no valid sample at {epoch}")
    return value


def _slot_clear_sky(series: Series, site: SiteConfig, solis: SolisParams, epochs) -> np.ndarray:
    kind = getattr(series, "kind", TargetKind.IRRADIANCE)
    return clear_sky_values(site, solis, epochs, kind, series.step)


# ------- point forecasts ------- #

def persistence(series: Series, t: int, horizon_s: int) -> float:
    """The last measurement, whatever the horizon."""
    return _value(series, t)


def scaled_persistence(
        series: HourlySeries,
        site: SiteConfig,
        solis: SolisParams,
        t: int,
        horizon_s: int,
        floor_wm2: float = DEFAULT_FLOOR_WM2,
) -> PointForecast:
    """Persistence of the clear-sky index: series(t) / CS(t) * CS(t + T).

    Falls back to persistence, flagged, when either clear-sky value is under
    the floor.
    """
    measured = _value(series, t)
    cs_now, cs_target = _slot_clear_sky(series, site, solis, [t, t + horizon_s])
    if cs_now < floor_wm2 or cs_target < floor_wm2:
        return PointForecast(measured, fallback=True)
    return PointForecast(float(measured / cs_now * cs_target))


def wm_forecast(
        minute_series: Series,
        t: int,
        horizon_s: int,
        trend_window_s: int = TREND_WINDOW_S,
        derivative_window_s: int = DERIVATIVE_WINDOW_S,
) -> float:
    """Local trend plus trend slope times the horizon, never below 0."""
    level = trend(minute_series, t, trend_window_s)
    slope = trend_derivative(minute_series, t, derivative_window_s)
    return max(0.0, level + slope * horizon_s)


def _lags(series: Series, t: int, n_lags: int) -> np.ndarray:
    end = series.index_of(t)
    if end is None or end < n_lags - 1:
        _unavailable(f"{n_lags} lags before {t} are not inside the series")
    begin = end - n_lags + 1
    if not series.valid[begin:end + 1].all():
        _unavailable(f"lag window ending at {t} holds invalid slots")
    return np.array(series.values[begin:end + 1])


def mlp_forecast(model: MlpModel, series: Series, t: int, horizon_s: int) -> float:
    return forward(model, _lags(series, t, model.n_lags))


def csi_mlp_forecast(
        model: MlpModel,
        csi_series: ClearSkyIndexSeries,
        site: SiteConfig,
        solis: SolisParams,
        t: int,
        horizon_s: int,
        floor_wm2: float = DEFAULT_FLOOR_WM2,
) -> float:
    """Forecast the clear-sky index, then scale by the clear sky at t + T."""
    (cs_target,) = _slot_clear_sky(csi_series, site, solis, [t + horizon_s])
    if cs_target < floor_wm2:
        _unavailable(f"clear sky {cs_target:.3g} W/m2 at {t + horizon_s} is under the floor")
    return forward(model, _lags(csi_series, t, model.n_lags)) * float(cs_target)


def lag_index_series(
        measured: HourlySeries, clear_sky: np.ndarray, floor_wm2: float = DEFAULT_FLOOR_WM2
) -> ClearSkyIndexSeries:
    """Clear-sky index usable as MLP lags.

    Validity follows the measurement; a valid slot whose clear sky is under the
    floor contributes an index of 0.
    """
    usable = measured.valid & (clear_sky >= floor_wm2)
    ratio = np.divide(measured.values, clear_sky, out=np.zeros(len(measured)), where=usable)
    return ClearSkyIndexSeries(
        start_epoch=measured.start_epoch,
        step=measured.step,
        values=np.minimum(ratio, 2.0),
        valid=measured.valid,
        kind=measured.kind,
    )


# ------- vectorised forecasters ------- #

class ForecastContext(BaseModel):
    """Shared inputs of every forecaster for one benchmark run."""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    target: HourlySeries
    minutes: MinuteSeries
    clear_sky: np.ndarray
    site: SiteConfig
    solis: SolisParams
    horizon_s: int
    floor_wm2: float = DEFAULT_FLOOR_WM2
    min_valid_minutes: int = MIN_VALID_MINUTES

    @property
    def horizon_steps(self) -> int:
        return self.horizon_s // self.target.step

    @property
    def step_minutes(self) -> int:
        return self.target.step // 60

    def wm_source(self) -> MinuteSeries:
        """WM reads the minute process matching the target's aggregation."""
        if self.target.kind == TargetKind.IRRADIATION:
            return running_mean(self.minutes, self.step_minutes, self.min_valid_minutes)
        return self.minutes

    def csi(self) -> ClearSkyIndexSeries:
        return lag_index_series(self.target, self.clear_sky, self.floor_wm2)


class Prediction(NamedTuple):
    predicted: np.ndarray
    valid: np.ndarray
    fallback: np.ndarray


class Forecaster:
    """Base forecaster over issue indices of the context's target grid."""
    method: ForecastMethod

    def __init__(self, context: ForecastContext, model: Optional[MlpModel] = None):
        self.context = context
        self.model = model

    def predict(self, issues: np.ndarray) -> Prediction:
        issues = np.asarray(issues, dtype=np.int64)
        predicted, valid, fallback = self._predict(issues)
        valid = valid & np.isfinite(predicted)
        return Prediction(np.where(valid, predicted, np.nan), valid, fallback & valid)

    def _predict(self, issues: np.ndarray):
        """Override in the concrete forecasters."""
        raise NotImplementedError


class PersistenceForecaster(Forecaster):
    method = ForecastMethod.P

    def _predict(self, issues):
        target = self.context.target
        return np.array(target.values[issues]), np.array(target.valid[issues]), np.zeros(len(issues), bool)


class ScaledPersistenceForecaster(Forecaster):
    method = ForecastMethod.SP

    def _predict(self, issues):
        ctx = self.context
        measured = ctx.target.values[issues]
        cs_now = ctx.clear_sky[issues]
        cs_target = ctx.clear_sky[issues + ctx.horizon_steps]
        scaled = (cs_now >= ctx.floor_wm2) & (cs_target >= ctx.floor_wm2)
        ratio = np.divide(measured, cs_now, out=np.zeros(len(issues)), where=scaled)
        predicted = np.where(scaled, ratio * cs_target, measured)
        return predicted, np.array(ctx.target.valid[issues]), ~scaled


class WithoutModelForecaster(Forecaster):
    method = ForecastMethod.WM

    def _predict(self, issues):
        ctx = self.context
        source = ctx.wm_source()
        predicted = np.full(len(issues), np.nan)
        for k, epoch in enumerate(ctx.target.epochs[issues]):
            try:
                predicted[k] = wm_forecast(source, int(epoch), ctx.horizon_s)
            except UnavailableEstimateError:
                continue
        valid = np.isfinite(predicted)
        if (~valid).any():
            logger.warning(f"WM unavailable for {int((~valid).sum())} of {len(issues)} slots")
        return predicted, valid, np.zeros(len(issues), bool)


class MlpForecaster(Forecaster):
    method = ForecastMethod.MLP

    def _lag_source(self) -> Series:
        return self.context.target

    def _predict(self, issues):
        source = self._lag_source()
        n_lags = self.model.n_lags
        valid = lags_available(source.valid, issues, n_lags)
        predicted = np.full(len(issues), np.nan)
        if valid.any():
            predicted[valid] = predict(self.model, lag_matrix(source.values, issues[valid], n_lags))
        return predicted, valid, np.zeros(len(issues), bool)


class CsiMlpForecaster(MlpForecaster):
    method = ForecastMethod.CSI_MLP

    def _lag_source(self) -> Series:
        return self.context.csi()

    def _predict(self, issues):
        ctx = self.context
        index, valid, fallback = super()._predict(issues)
        cs_target = ctx.clear_sky[issues + ctx.horizon_steps]
        valid &= cs_target >= ctx.floor_wm2
        return index * cs_target, valid, fallback


Forecasters: dict[ForecastMethod, Type[Forecaster]] = {
    ForecastMethod.P: PersistenceForecaster,
    ForecastMethod.SP: ScaledPersistenceForecaster,
    ForecastMethod.WM: WithoutModelForecaster,
    ForecastMethod.MLP: MlpForecaster,
    ForecastMethod.CSI_MLP: CsiMlpForecaster,
}
