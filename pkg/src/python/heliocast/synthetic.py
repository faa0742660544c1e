"""
Seeded synthetic minute irradiance: the Solis curve times an AR(1) clear-sky index.
"""
import datetime
from typing import Union

import numpy as np
import pandas as pd
from loguru import logger

from heliocast.clearsky import solis_curve
from heliocast.schemas import CloudModel, MinuteSeries, SiteConfig, SolisParams
from heliocast.settings import MAX_IRRADIANCE

MINUTES_PER_DAY = 1440


def day_start_epoch(start_date: Union[str, datetime.date]) -> int:
    stamp = pd.Timestamp(str(start_date))
    if stamp.tzinfo is None:
        stamp = stamp.tz_localize("UTC")
    return int(stamp.normalize().timestamp())


def reflect(value: float, low: float, high: float) -> float:
    """Fold ``value`` back into [low, high] at the bounds."""
    if value > high:
        value = 2 * high - value
    if value < low:
        value = 2 * low - value
    return min(max(value, low), high)


def cloud_index(cloud: CloudModel, day: int) -> np.ndarray:
    """One day of the index; each day restarts at kt_mean with seed ``cloud.seed + day``."""
    if cloud.sigma == 0:
        return np.full(MINUTES_PER_DAY, cloud.kt_mean)

    rng = np.random.Generator(np.random.PCG64(cloud.seed + day))
    shocks = (cloud.sigma * rng.standard_normal(MINUTES_PER_DAY - 1)).tolist()
    kt = cloud.kt_mean
    path = [kt]
    for shock in shocks:
        kt = reflect(cloud.kt_mean + cloud.rho * (kt - cloud.kt_mean) + shock, cloud.kt_floor, 1.0)
        path.append(kt)
    return np.array(path)


def gen_days(
        site: SiteConfig,
        solis: SolisParams,
        cloud: CloudModel,
        start_date: Union[str, datetime.date],
        n_days: int,
) -> MinuteSeries:
    if n_days < 1:
        msg = f"n_days must be at least 1, got {n_days}"
        logger.error(msg)
        raise ValueError(msg)

    start = day_start_epoch(start_date)
    epochs = start + 60 * np.arange(n_days * MINUTES_PER_DAY, dtype=np.int64)
    kt = np.concatenate([cloud_index(cloud, day) for day in range(n_days)])
    values = solis_curve(site, solis, epochs) * kt

    logger.info(
        f"generated {n_days} days from {start_date} ({cloud.regime}, seed {cloud.seed}) at {site.name}"
    )
    return MinuteSeries(
        start_epoch=start,
        step=60,
        values=values,
        valid=np.ones(len(values), dtype=bool),
        ceiling=max(MAX_IRRADIANCE, solis.i0_adj),
    )
