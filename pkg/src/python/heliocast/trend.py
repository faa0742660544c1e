"""
Windowed algebraic estimation of the local trend and its derivative.

Over a window [0, L] the signal is projected on the affine model
``a0 + a1 * tau`` through its two moment integrals

    I0 = int_0^L x dtau,   I1 = int_0^L tau * x dtau
    a0 = 4 I0 / L - 6 I1 / L**2
    a1 = 12 I1 / L**3 - 6 I0 / L**2

The integrals are taken exactly over the piecewise-linear interpolant of the
samples, so the estimate is exact on affine signals. Both coefficients are
linear in the samples: a fully valid window reduces to two fixed weight
vectors, which is what the sliding estimators convolve with.
"""
import math
from functools import lru_cache
from typing import Optional, Tuple

import numpy as np
from loguru import logger

from heliocast.errors import UnavailableEstimateError
from heliocast.schemas import Decomposition, Series, TrendEstimate

TREND_WINDOW_S = 600
DERIVATIVE_WINDOW_S = 4500
MIN_SAMPLES = 5
MIN_VALID_FRACTION = 0.9


def _unavailable(msg: str):
    logger.debug(msg)
    raise UnavailableEstimateError(msg)


def moment_weights(tau: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Node weights c0, c1 with I0 = c0 @ x and I1 = c1 @ x."""
    h = np.diff(tau)
    c0 = np.zeros(len(tau))
    c1 = np.zeros(len(tau))
    c0[:-1] += h / 2
    c0[1:] += h / 2
    c1[:-1] += h / 6 * (2 * tau[:-1] + tau[1:])
    c1[1:] += h / 6 * (tau[:-1] + 2 * tau[1:])
    return c0, c1


def coefficient_weights(tau: np.ndarray, length: float) -> Tuple[np.ndarray, np.ndarray]:
    """Weights w0, w1 with a0 = w0 @ x and a1 = w1 @ x over [0, length]."""
    c0, c1 = moment_weights(tau)
    w0 = 4 * c0 / length - 6 * c1 / length ** 2
    w1 = 12 * c1 / length ** 3 - 6 * c0 / length ** 2
    return w0, w1


@lru_cache(maxsize=64)
def window_weights(n_samples: int, step: int) -> Tuple[np.ndarray, np.ndarray]:
    """(level at the right edge, slope) weights of a fully valid uniform window."""
    tau = step * np.arange(n_samples, dtype=np.float64)
    length = step * (n_samples - 1)
    w0, w1 = coefficient_weights(tau, length)
    level, slope = w0 + w1 * length, w1
    level.setflags(write=False)
    slope.setflags(write=False)
    return level, slope


def fit_local_linear(
        tau, values, window_s: float, anchor_epoch: Optional[float] = None
) -> TrendEstimate:
    """Affine model of ``values`` sampled at offsets ``tau`` inside [0, window_s].

    When the samples do not reach both window edges the moments are taken over
    the sampled span and the model is re-expressed on the full window.
    """
    tau = np.asarray(tau, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    if tau.shape != values.shape or tau.ndim != 1:
        raise ValueError(f"tau and values differ in shape ({tau.shape} != {values.shape})")
    if window_s <= 0:
        raise ValueError(f"window must be positive, got {window_s}")
    if len(tau) < MIN_SAMPLES:
        _unavailable(f"{len(tau)} samples in window, at least {MIN_SAMPLES} required")
    if np.any(np.diff(tau) <= 0):
        msg = "sample offsets must be strictly increasing"
        logger.error(msg)
        raise ValueError(msg)
    if tau[0] < 0 or tau[-1] > window_s:
        msg = f"sample offsets must lie in [0, {window_s}]"
        logger.error(msg)
        raise ValueError(msg)

    start = tau[0]
    span = tau[-1] - start
    w0, w1 = coefficient_weights(tau - start, span)
    slope = float(w1 @ values)
    level = float(w0 @ values) - slope * start
    return TrendEstimate(
        a0=level,
        a1=slope,
        window_s=window_s,
        anchor_epoch=window_s if anchor_epoch is None else anchor_epoch,
        n_samples=len(tau),
    )


def _window(series: Series, anchor_epoch: int, window_s: int):
    if window_s % series.step:
        msg = f"window {window_s} s is not a multiple of the series step {series.step} s"
        logger.error(msg)
        raise ValueError(msg)
    end = series.index_of(anchor_epoch)
    if end is None:
        _unavailable(f"anchor {anchor_epoch} is not on the series grid")
    begin = end - window_s // series.step
    if begin < 0:
        _unavailable(f"window of {window_s} s before {anchor_epoch} starts before the series")
    return begin, end + 1


def estimate(series: Series, anchor_epoch: int, window_s: int) -> TrendEstimate:
    """Fit over [anchor - window_s, anchor], refusing windows under 90 % valid."""
    begin, end = _window(series, anchor_epoch, window_s)
    used = series.valid[begin:end]
    n_valid = int(used.sum())
    if n_valid < MIN_VALID_FRACTION * len(used) or n_valid < MIN_SAMPLES:
        _unavailable(f"{n_valid} of {len(used)} samples valid in the window ending at {anchor_epoch}")

    if n_valid == len(used):
        level, slope = window_weights(len(used), series.step)
        values = series.values[begin:end]
        a1 = float(slope @ values)
        return TrendEstimate(
            a0=float(level @ values) - a1 * window_s,
            a1=a1,
            window_s=window_s,
            anchor_epoch=anchor_epoch,
            n_samples=n_valid,
        )

    tau = series.step * np.flatnonzero(used).astype(np.float64)
    return fit_local_linear(tau, series.values[begin:end][used], window_s, anchor_epoch)


def trend(series: Series, anchor_epoch: int, window_s: int = TREND_WINDOW_S) -> float:
    """Value of the local affine model at the window's right edge."""
    return estimate(series, anchor_epoch, window_s).trend_at_anchor


def trend_derivative(series: Series, anchor_epoch: int, window_s: int = DERIVATIVE_WINDOW_S) -> float:
    return estimate(series, anchor_epoch, window_s).a1


def sliding_estimates(series: Series, window_s: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Trend at the right edge and slope for every slot taken as anchor.

    Returns ``(level, slope, ok)``; slots without an acceptable window hold 0.0.
    """
    if window_s % series.step:
        msg = f"window {window_s} s is not a multiple of the series step {series.step} s"
        logger.error(msg)
        raise ValueError(msg)
    n = len(series)
    width = window_s // series.step + 1
    level_out = np.zeros(n)
    slope_out = np.zeros(n)
    ok = np.zeros(n, dtype=bool)
    if n < width:
        return level_out, slope_out, ok

    counts = np.convolve(series.valid.astype(np.int64), np.ones(width, dtype=np.int64), mode="valid")
    needed = max(MIN_SAMPLES, math.ceil(MIN_VALID_FRACTION * width - 1e-9))
    full = counts == width
    partial = (counts >= needed) & ~full

    level_w, slope_w = window_weights(width, series.step)
    values = np.where(series.valid, series.values, 0.0)
    tail = slice(width - 1, None)
    level_out[tail] = np.where(full, np.convolve(values, level_w[::-1], mode="valid"), 0.0)
    slope_out[tail] = np.where(full, np.convolve(values, slope_w[::-1], mode="valid"), 0.0)
    ok[tail] = full

    for index in np.flatnonzero(partial) + width - 1:
        fitted = estimate(series, int(series.epochs[index]), window_s)
        level_out[index] = fitted.trend_at_anchor
        slope_out[index] = fitted.a1
        ok[index] = True

    logger.debug(f"{int(ok.sum())} of {n} windows of {window_s} s estimated ({int(partial.sum())} with gaps)")
    return level_out, slope_out, ok


def decompose(series: Series, window_s: int = TREND_WINDOW_S) -> Decomposition:
    """Split ``series`` into its local trend and the quick fluctuation around it."""
    level, _, ok = sliding_estimates(series, window_s)
    ok &= series.valid
    if not ok.any():
        msg = f"no valid {window_s} s window in the series"
        logger.error(msg)
        raise UnavailableEstimateError(msg)
    level = np.where(ok, level, 0.0)
    fluctuation = np.where(ok, series.values - level, 0.0)
    return Decomposition(
        trend=Series(start_epoch=series.start_epoch, step=series.step, values=level, valid=ok),
        fluctuation=Series(start_epoch=series.start_epoch, step=series.step, values=fluctuation, valid=ok),
    )
