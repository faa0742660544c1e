"""
Sun position from the NOAA low-accuracy (fractional year) series.

All epochs are UTC seconds; true solar time is derived from longitude and the
equation of time, so no time zone enters the computation.
"""
from typing import NamedTuple, Union

import numpy as np
from loguru import logger

from heliocast.schemas import Series, SiteConfig, SunPosition

EPOCH_1950 = -631152000
EPOCH_2101 = 4133980800
MAX_DECLINATION = np.radians(23.45)


class SolarAngles(NamedTuple):
    elevation_deg: np.ndarray
    azimuth_deg: np.ndarray
    declination_deg: np.ndarray
    eot_minutes: np.ndarray


def _check_range(epochs: np.ndarray):
    if epochs.size and (epochs.min() < EPOCH_1950 or epochs.max() >= EPOCH_2101):
        msg = "sun position is only supported for years 1950-2100"
        logger.error(msg)
        raise ValueError(msg)


def fractional_year(epochs: np.ndarray) -> np.ndarray:
    """Fractional year angle (radians) with the NOAA (hour - 12) / 24 offset."""
    stamps = epochs.astype("datetime64[s]")
    years = stamps.astype("datetime64[Y]")
    year_start = years.astype("datetime64[s]").astype(np.int64)
    days_in_year = ((years + 1).astype("datetime64[s]").astype(np.int64) - year_start) / 86400
    day_of_year = (epochs - year_start) // 86400 + 1
    hours = (epochs % 86400) / 3600.0
    return 2 * np.pi / days_in_year * (day_of_year - 1 + (hours - 12) / 24)


def equation_of_time(gamma: np.ndarray) -> np.ndarray:
    """Minutes."""
    return 229.18 * (
        0.000075
        + 0.001868 * np.cos(gamma)
        - 0.032077 * np.sin(gamma)
        - 0.014615 * np.cos(2 * gamma)
        - 0.040849 * np.sin(2 * gamma)
    )


def declination(gamma: np.ndarray) -> np.ndarray:
    """Radians, bounded by the obliquity."""
    decl = (
        0.006918
        - 0.399912 * np.cos(gamma)
        + 0.070257 * np.sin(gamma)
        - 0.006758 * np.cos(2 * gamma)
        + 0.000907 * np.sin(2 * gamma)
        - 0.002697 * np.cos(3 * gamma)
        + 0.00148 * np.sin(3 * gamma)
    )
    # the series overshoots the solstices by a few thousandths of a degree
    return np.clip(decl, -MAX_DECLINATION, MAX_DECLINATION)


def refraction(elevation_deg: np.ndarray) -> np.ndarray:
    """NOAA approximate atmospheric refraction, degrees."""
    e = np.asarray(elevation_deg, dtype=np.float64)
    tan_e = np.tan(np.radians(np.clip(e, -89.0, 89.0)))
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        high = 58.1 / tan_e - 0.07 / tan_e ** 3 + 0.000086 / tan_e ** 5
        low = 1735 + e * (-518.2 + e * (103.4 + e * (-12.79 + e * 0.711)))
        below = -20.774 / tan_e
    arcsec = np.select([e > 85, e > 5, e > -0.575], [0.0, high, low], default=below)
    return arcsec / 3600.0


def solar_angles(site: SiteConfig, epochs, apply_refraction: bool = True) -> SolarAngles:
    epochs = np.atleast_1d(np.asarray(epochs, dtype=np.int64))
    _check_range(epochs)

    gamma = fractional_year(epochs)
    eqtime = equation_of_time(gamma)
    decl = declination(gamma)

    minutes_of_day = (epochs % 86400) / 60.0
    true_solar_time = minutes_of_day + eqtime + 4.0 * site.longitude_deg
    hour_angle = np.radians(true_solar_time / 4.0 - 180.0)

    phi = np.radians(site.latitude_deg)
    cos_zenith = np.sin(phi) * np.sin(decl) + np.cos(phi) * np.cos(decl) * np.cos(hour_angle)
    elevation = 90.0 - np.degrees(np.arccos(np.clip(cos_zenith, -1.0, 1.0)))
    if apply_refraction:
        elevation = np.clip(elevation + refraction(elevation), -90.0, 90.0)

    azimuth = np.degrees(np.arctan2(
        np.sin(hour_angle),
        np.cos(hour_angle) * np.sin(phi) - np.tan(decl) * np.cos(phi),
    ))
    azimuth = np.mod(azimuth + 180.0, 360.0)
    return SolarAngles(elevation, azimuth, np.degrees(decl), eqtime)


def solar_elevation(site: SiteConfig, epochs, apply_refraction: bool = True) -> np.ndarray:
    return solar_angles(site, epochs, apply_refraction=apply_refraction).elevation_deg


def sun_position(site: SiteConfig, epoch: Union[int, float]) -> SunPosition:
    angles = solar_angles(site, [int(epoch)])
    return SunPosition(
        elevation_deg=float(angles.elevation_deg[0]),
        azimuth_deg=float(angles.azimuth_deg[0]) % 360.0,
        declination_deg=float(angles.declination_deg[0]),
        eot_minutes=float(angles.eot_minutes[0]),
    )


def daylight_mask(site: SiteConfig, series: Series, min_elevation_deg: float = 1.0) -> np.ndarray:
    """True where the sun is above the threshold and the sample is valid."""
    if not -5.0 <= min_elevation_deg <= 20.0:
        msg = f"daylight threshold {min_elevation_deg} deg outside [-5, 20]"
        logger.error(msg)
        raise ValueError(msg)
    return (solar_elevation(site, series.epochs) > min_elevation_deg) & series.valid
