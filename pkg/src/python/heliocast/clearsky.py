"""
Simplified Solis clear-sky global irradiance.

    G(h) = i0_adj * exp(-tau / sin(h) ** g) * sin(h),   G = 0 for h <= 0

The clear-sky reference of a stepped series follows the aggregation of that
series: an Irradiation slot gets the trailing mean of the minute curve over
the same window, an Irradiance slot the instantaneous value.
"""
from typing import Optional, Union

import numpy as np
from loguru import logger
from scipy.optimize import minimize

from heliocast.errors import CalibrationError
from heliocast.schemas import ClearSkyIndexSeries, HourlySeries, Series, SiteConfig, SolisParams
from heliocast.settings import TargetKind
from heliocast.solar import solar_elevation

CSI_CAP = 2.0
CALIBRATION_MIN_SAMPLES = 100
CALIBRATION_MIN_ELEVATION = 5.0
ENVELOPE_BIN = 0.01


def solis_from_elevation(elevation_deg, params: SolisParams) -> np.ndarray:
    sin_h = np.sin(np.radians(np.asarray(elevation_deg, dtype=np.float64)))
    day = sin_h > 0
    safe = np.where(day, sin_h, 1.0)
    curve = params.i0_adj * np.exp(-params.tau / safe ** params.g) * safe
    return np.where(day, curve, 0.0)


def solis_curve(site: SiteConfig, params: SolisParams, epochs) -> np.ndarray:
    return solis_from_elevation(solar_elevation(site, epochs), params)


def solis_irradiance(site: SiteConfig, params: SolisParams, epoch: Union[int, float]) -> float:
    return float(solis_curve(site, params, [int(epoch)])[0])


def clear_sky_values(
        site: SiteConfig,
        params: SolisParams,
        epochs,
        kind: TargetKind = TargetKind.IRRADIANCE,
        step: int = 60,
) -> np.ndarray:
    """Clear sky at ``epochs``; for Irradiation the trailing mean over ``step`` seconds."""
    epochs = np.atleast_1d(np.asarray(epochs, dtype=np.int64))
    if kind != TargetKind.IRRADIATION:
        return solis_curve(site, params, epochs)

    width = step // 60
    offsets = 60 * np.arange(-(width - 1), 1, dtype=np.int64)
    minutes = (epochs[:, None] + offsets[None, :]).ravel()
    return solis_curve(site, params, minutes).reshape(len(epochs), width).mean(axis=1)


def clear_sky_reference(series: Series, site: SiteConfig, params: SolisParams) -> np.ndarray:
    """Clear-sky value of every slot of ``series`` on the series' own aggregation."""
    kind = getattr(series, "kind", TargetKind.IRRADIANCE)
    return clear_sky_values(site, params, series.epochs, kind, series.step)


def clear_sky_index(
        measured: HourlySeries,
        site: SiteConfig,
        params: SolisParams,
        floor_wm2: float = 20.0,
        clear_sky: Optional[np.ndarray] = None,
) -> ClearSkyIndexSeries:
    """measured / clear sky where the clear sky reaches the floor, capped at 2.

    ``clear_sky`` may carry a precomputed reference on the same grid.
    """
    if floor_wm2 <= 0:
        msg = f"clear-sky floor must be positive, got {floor_wm2}"
        logger.error(msg)
        raise ValueError(msg)
    if clear_sky is None:
        clear_sky = clear_sky_reference(measured, site, params)
    elif len(clear_sky) != len(measured):
        msg = f"clear-sky grid of {len(clear_sky)} slots does not match the series ({len(measured)})"
        logger.error(msg)
        raise ValueError(msg)

    ok = measured.valid & (clear_sky >= floor_wm2)
    ratio = np.divide(measured.values, clear_sky, out=np.zeros(len(measured)), where=ok)
    return ClearSkyIndexSeries(
        start_epoch=measured.start_epoch,
        step=measured.step,
        values=np.minimum(ratio, CSI_CAP),
        valid=ok,
        kind=getattr(measured, "kind", TargetKind.IRRADIANCE),
    )


def upper_envelope(sin_h: np.ndarray, values: np.ndarray, bin_width: float = ENVELOPE_BIN):
    """Per-bin maximum of ``values`` over bins of ``sin_h``; returns (sin_h, values) pairs."""
    bins = np.floor(sin_h / bin_width).astype(np.int64)
    order = np.lexsort((values, bins))
    sorted_bins = bins[order]
    last = np.r_[sorted_bins[1:] != sorted_bins[:-1], True]
    picked = order[last]
    return sin_h[picked], values[picked]


def calibrate_solis(
        clear_days: Series, site: SiteConfig, defaults: SolisParams = SolisParams()
) -> SolisParams:
    """Fit tau, g and i0_adj to the upper envelope of the measurements.

    i0_adj has a closed form for given (tau, g), so Nelder-Mead only searches
    the two shape parameters. Relative residuals keep low-sun bins in play.
    """
    elevation = solar_elevation(site, clear_days.epochs)
    mask = clear_days.valid & (elevation > CALIBRATION_MIN_ELEVATION)
    if mask.sum() < CALIBRATION_MIN_SAMPLES:
        msg = (
            f"calibration needs at least {CALIBRATION_MIN_SAMPLES} daylight samples "
            f"above {CALIBRATION_MIN_ELEVATION} deg, got {int(mask.sum())}"
        )
        logger.error(msg)
        raise CalibrationError(msg)

    sin_h, envelope = upper_envelope(np.sin(np.radians(elevation[mask])), clear_days.values[mask])
    positive = envelope > 0
    sin_h, envelope = sin_h[positive], envelope[positive]
    if len(envelope) < 3:
        msg = f"clear-sky envelope has only {len(envelope)} usable bins"
        logger.error(msg)
        raise CalibrationError(msg)

    def _shape(tau: float, g: float) -> np.ndarray:
        return np.exp(-tau / sin_h ** g) * sin_h / envelope

    def _i0(ratio: np.ndarray) -> float:
        return float(ratio.sum() / (ratio ** 2).sum())

    def _objective(x: np.ndarray) -> float:
        tau, g = x
        if tau <= 0 or not 0 < g <= 1.5:
            return 1e12
        ratio = _shape(tau, g)
        return float(((_i0(ratio) * ratio - 1.0) ** 2).sum())

    res = minimize(
        _objective,
        np.array([defaults.tau, defaults.g]),
        method="Nelder-Mead",
        options={"xatol": 1e-8, "fatol": 1e-14, "maxiter": 4000},
    )
    tau, g = (float(v) for v in res.x)
    if not res.success or tau <= 0 or not 0 < g <= 1.5:
        logger.warning(f"Solis fit did not converge ({res.message}), keeping {defaults}")
        return defaults

    i0_adj = _i0(_shape(tau, g))
    if not np.isfinite(i0_adj) or i0_adj <= 0:
        logger.warning(f"Solis fit gave i0_adj={i0_adj}, keeping {defaults}")
        return defaults

    params = SolisParams(tau=tau, g=g, i0_adj=i0_adj)
    logger.info(f"calibrated {params} on {len(envelope)} envelope bins (residual {res.fun:.3g})")
    return params
