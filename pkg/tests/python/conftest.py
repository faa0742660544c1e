import numpy as np
import pytest
from typer.testing import CliRunner

from heliocast.schemas import (
    CloudModel,
    ForecastRecord,
    MinuteSeries,
    Series,
    SiteConfig,
    SolisParams,
)
from heliocast.settings import ForecastMethod
from heliocast.synthetic import gen_days

EPOCH_2013 = 1356998400
# 2013-02-13T08:00:00Z
FEB_13_0800 = 1360742400

_SYNTHETIC_CACHE = {}


@pytest.fixture()
def site() -> SiteConfig:
    return SiteConfig()


@pytest.fixture()
def solis() -> SolisParams:
    return SolisParams()


@pytest.fixture()
def minute_series():
    def _inner(values, start_epoch: int = FEB_13_0800, valid=None, **kwargs):
        values = np.asarray(values, dtype=np.float64)
        if valid is None:
            valid = np.ones(len(values), dtype=bool)
        return MinuteSeries(start_epoch=start_epoch, step=60, values=values, valid=valid, **kwargs)
    yield _inner


@pytest.fixture()
def signal():
    """Unconstrained series (negative values allowed), for estimator tests."""
    def _inner(values, start_epoch: int = 0, step: int = 60, valid=None):
        values = np.asarray(values, dtype=np.float64)
        if valid is None:
            valid = np.ones(len(values), dtype=bool)
        return Series(start_epoch=start_epoch, step=step, values=values, valid=valid)
    yield _inner


@pytest.fixture()
def affine_signal(signal):
    def _inner(a0: float, a1: float, n: int, start_epoch: int = 0, step: int = 60):
        tau = step * np.arange(n, dtype=np.float64)
        return signal(a0 + a1 * tau, start_epoch=start_epoch, step=step)
    yield _inner


@pytest.fixture()
def synthetic():
    """Generated minute data, cached across tests of the session."""
    def _inner(regime: str = "clear", seed: int = 0, start_date: str = "2013-01-01", n_days: int = 365, **kwargs):
        key = (regime, seed, start_date, n_days, tuple(sorted(kwargs.items())))
        if key not in _SYNTHETIC_CACHE:
            site = kwargs.pop("site", SiteConfig())
            solis = kwargs.pop("solis", SolisParams())
            cloud = CloudModel(regime=regime, seed=seed, **kwargs)
            _SYNTHETIC_CACHE[key] = gen_days(site, solis, cloud, start_date, n_days)
        return _SYNTHETIC_CACHE[key]
    yield _inner


@pytest.fixture()
def records():
    def _inner(predicted, observed, method: ForecastMethod = ForecastMethod.P, valid=None, fallback=None, **kwargs):
        n = len(observed)
        valid = [True] * n if valid is None else valid
        fallback = [False] * n if fallback is None else fallback
        return [
            ForecastRecord(
                issue_epoch=EPOCH_2013 + 3600 * k,
                horizon_s=3600,
                method=method,
                predicted=float(p),
                observed=float(o),
                valid=v,
                fallback=f,
                **kwargs,
            )
            for k, (p, o, v, f) in enumerate(zip(predicted, observed, valid, fallback))
        ]
    yield _inner


@pytest.fixture()
def cli_runner() -> CliRunner:
    yield CliRunner()


@pytest.fixture()
def run_file(tmp_path):
    def _inner(**entries):
        path = tmp_path / "run.env"
        path.write_text("".join(f"{key.replace('__', '.')}={value}\n" for key, value in entries.items()))
        return path
    yield _inner
