"""
Flat ``section.key=value`` run configuration.

Every key has a default; unknown sections or keys are rejected.
"""
import datetime
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

from dotenv import dotenv_values
from loguru import logger
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from heliocast.errors import ConfigError, InvalidBenchmarkConfig, UnknownConfigKey
from heliocast.schemas import BenchmarkConfig, CloudModel, SiteConfig, SolisParams, TrainSpec
from heliocast.settings import MAX_IRRADIANCE, MIN_VALID_MINUTES, CloudRegime, ForecastMethod, TargetKind


def _split_list(value):
    if isinstance(value, str):
        return [item.strip() for item in value.split(",") if item.strip()]
    return value


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class SiteSection(_Section):
    lat: float = Field(default=48.66, ge=-90, le=90)
    lon: float = Field(default=6.16, ge=-180, le=180)
    alt: float = Field(default=230.0, ge=-430)
    name: str = "nancy-brabois"


class SolisSection(_Section):
    tau: float = Field(default=0.35, gt=0)
    g: float = Field(default=0.55, gt=0, le=1.5)
    i0_adj: float = Field(default=1450.0, gt=0)
    floor: float = Field(default=20.0, gt=0)


class SeriesSection(_Section):
    ceiling: float = Field(default=MAX_IRRADIANCE, gt=0)
    min_valid: int = Field(default=MIN_VALID_MINUTES, ge=1, le=60)


class BenchSection(_Section):
    horizon_min: int = Field(default=60, gt=0)
    step_min: int = Field(default=60, gt=0)
    target: Optional[TargetKind] = None
    train_years: List[int] = Field(default_factory=list)
    test_year: int = 2013
    methods: List[ForecastMethod] = Field(default_factory=list)

    @field_validator("train_years", "methods", mode="before")
    @classmethod
    def _comma_lists(cls, value):
        return _split_list(value)

    @field_validator("target", mode="before")
    @classmethod
    def _blank_target(cls, value):
        # an empty bench.target= keeps the horizon/step dependent default
        if isinstance(value, str) and not value.strip():
            return None
        return value


class MlpSection(_Section):
    lags: int = Field(default=8, gt=0)
    hidden: int = Field(default=10, gt=0)
    lr: float = Field(default=0.01, gt=0)
    momentum: float = Field(default=0.9, ge=0, lt=1)
    epochs: int = Field(default=200, gt=0)
    patience: int = Field(default=20, gt=0)
    seed: int = Field(default=0, ge=0)
    runs: int = Field(default=7, ge=1)
    validation_fraction: float = Field(default=0.2, gt=0, le=0.5)


class EvalSection(_Section):
    exclude_fallback: bool = False
    daylight_min_elev: float = Field(default=1.0, ge=-5, le=20)


class SynthSection(_Section):
    regime: CloudRegime = CloudRegime.BROKEN
    start_date: datetime.date = datetime.date(2011, 1, 1)
    rho: float = 0.995
    sigma: float = 0.03
    kt_floor: float = 0.05
    kt_mean: float = 0.7


class RunConfig(_Section):
    site: SiteSection = Field(default_factory=SiteSection)
    solis: SolisSection = Field(default_factory=SolisSection)
    series: SeriesSection = Field(default_factory=SeriesSection)
    bench: BenchSection = Field(default_factory=BenchSection)
    mlp: MlpSection = Field(default_factory=MlpSection)
    eval: EvalSection = Field(default_factory=EvalSection)
    synth: SynthSection = Field(default_factory=SynthSection)

    def site_config(self) -> SiteConfig:
        return SiteConfig(lat=self.site.lat, lon=self.site.lon, alt=self.site.alt, name=self.site.name)

    def solis_params(self) -> SolisParams:
        return SolisParams(tau=self.solis.tau, g=self.solis.g, i0_adj=self.solis.i0_adj)

    def train_spec(self) -> TrainSpec:
        return TrainSpec(
            lags=self.mlp.lags,
            hidden=self.mlp.hidden,
            lr=self.mlp.lr,
            momentum=self.mlp.momentum,
            epochs=self.mlp.epochs,
            patience=self.mlp.patience,
            seed=self.mlp.seed,
            validation_fraction=self.mlp.validation_fraction,
        )

    def cloud_model(self, seed: int = 0) -> CloudModel:
        return CloudModel(
            seed=seed,
            regime=self.synth.regime,
            rho=self.synth.rho,
            sigma=self.synth.sigma,
            kt_floor=self.synth.kt_floor,
            kt_mean=self.synth.kt_mean,
        )

    def to_benchmark_config(self) -> BenchmarkConfig:
        try:
            return BenchmarkConfig(
                horizon_minutes=self.bench.horizon_min,
                step_minutes=self.bench.step_min,
                target=self.bench.target,
                train_years=self.bench.train_years,
                test_year=self.bench.test_year,
                methods=self.bench.methods or None,
                site=self.site_config(),
                solis=self.solis_params(),
                floor_wm2=self.solis.floor,
                train_spec=self.train_spec(),
                n_runs=self.mlp.runs,
                daylight_min_elev=self.eval.daylight_min_elev,
                min_valid_minutes=self.series.min_valid,
            )
        except ValidationError as exc_info:
            msg = f"inconsistent benchmark configuration: {_describe(exc_info)}"
            logger.error(msg)
            raise InvalidBenchmarkConfig(msg)


def _describe(exc_info: ValidationError) -> str:
    return "; ".join(
        f"{'.'.join(str(p) for p in error['loc']) or 'config'}: {error['msg']}" for error in exc_info.errors()
    )


def explode(flat: Dict[str, Any]) -> Dict[str, Dict[str, Any]]:
    """``{"site.lat": "1"}`` -> ``{"site": {"lat": "1"}}``."""
    nested: Dict[str, Dict[str, Any]] = {}
    for key, value in flat.items():
        section, dot, name = key.partition(".")
        if not dot or not section or not name or "." in name:
            msg = f"config key '{key}' is not of the form section.key"
            logger.error(msg)
            raise UnknownConfigKey(msg)
        nested.setdefault(section, {})[name] = "" if value is None else value
    return nested


def parse_config(flat: Dict[str, Any]) -> RunConfig:
    try:
        return RunConfig.model_validate(explode(flat))
    except ValidationError as exc_info:
        unknown = [e for e in exc_info.errors() if e["type"] == "extra_forbidden"]
        if unknown:
            keys = ", ".join(".".join(str(p) for p in e["loc"]) for e in unknown)
            msg = f"unknown config key(s): {keys}"
            logger.error(msg)
            raise UnknownConfigKey(msg)
        msg = f"invalid config: {_describe(exc_info)}"
        logger.error(msg)
        raise ConfigError(msg)


def load_config(path: Optional[Union[str, Path]] = None) -> RunConfig:
    """Read a run file; no path gives the documented defaults."""
    if path is None:
        return RunConfig()
    if not Path(path).is_file():
        msg = f"config file {path} not found"
        logger.error(msg)
        raise ConfigError(msg)
    config = parse_config(dotenv_values(path))
    logger.debug(f"loaded config from {path}")
    return config


def solis_fragment(params: SolisParams) -> str:
    """``solis.*`` lines ready to paste into a run file."""
    return (
        f"solis.tau={params.tau:.6g}\n"
        f"solis.g={params.g:.6g}\n"
        f"solis.i0_adj={params.i0_adj:.6g}\n"
    )
