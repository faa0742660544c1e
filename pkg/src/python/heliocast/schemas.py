import math
from typing import List, Optional, Tuple, Union

import numpy as np
from pydantic import AliasChoices, BaseModel, ConfigDict, Field, field_validator, model_validator

from heliocast.settings import CloudRegime, ForecastMethod, MAX_IRRADIANCE, MIN_VALID_MINUTES, TargetKind


def _frozen_array(value, dtype) -> np.ndarray:
    array = np.array(value, dtype=dtype, copy=True)
    if array.ndim != 1:
        raise ValueError(f"expected a 1-D sequence, got shape {array.shape}")
    array.setflags(write=False)
    return array


# ------- Series ------- #

class Series(BaseModel):
    """Uniform-step signal: sample k sits at start_epoch + k * step (UTC seconds)."""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    start_epoch: int
    step: int = 60
    values: np.ndarray
    valid: np.ndarray

    @field_validator("values", mode="before")
    @classmethod
    def _values_array(cls, value):
        return _frozen_array(value, np.float64)

    @field_validator("valid", mode="before")
    @classmethod
    def _valid_array(cls, value):
        return _frozen_array(value, np.bool_)

    @model_validator(mode="after")
    def _check_grid(self):
        if self.step <= 0:
            raise ValueError(f"step must be positive, got {self.step}")
        if len(self.values) != len(self.valid):
            raise ValueError(
                f"values and valid differ in length ({len(self.values)} != {len(self.valid)})"
            )
        if np.any(~np.isfinite(self.values[self.valid])):
            raise ValueError("valid samples must be finite")
        self._check_values()
        return self

    def _check_values(self):
        """Override for value-range invariants."""

    def __len__(self) -> int:
        return len(self.values)

    @property
    def epochs(self) -> np.ndarray:
        return self.start_epoch + self.step * np.arange(len(self.values), dtype=np.int64)

    @property
    def end_epoch(self) -> int:
        return self.start_epoch + self.step * (len(self.values) - 1)

    def index_of(self, epoch: int) -> Optional[int]:
        """Grid index of an epoch, None when off-grid or out of range."""
        offset = int(epoch) - self.start_epoch
        if offset % self.step:
            return None
        index = offset // self.step
        if 0 <= index < len(self.values):
            return index
        return None

    def value_at(self, epoch: int) -> Optional[float]:
        """Sample value at an epoch, None when the slot is missing or invalid."""
        index = self.index_of(epoch)
        if index is None or not self.valid[index]:
            return None
        return float(self.values[index])


class MinuteSeries(Series):
    ceiling: float = MAX_IRRADIANCE

    def _check_values(self):
        checked = self.values[self.valid]
        if np.any(checked < 0) or np.any(checked > self.ceiling):
            raise ValueError(f"valid irradiance samples must lie in [0, {self.ceiling}] W/m2")


class HourlySeries(MinuteSeries):
    """Stepped target series; Irradiation values are trailing means in Wh/m2."""
    step: int = 3600
    kind: TargetKind = TargetKind.IRRADIANCE

    def matches_source(self, source: MinuteSeries, min_valid: int = MIN_VALID_MINUTES) -> bool:
        """Re-derive every valid Irradiation slot from the minute source."""
        if self.kind != TargetKind.IRRADIATION:
            return True
        width = self.step // source.step
        for index in np.flatnonzero(self.valid):
            end = source.index_of(self.start_epoch + self.step * int(index))
            if end is None or end + 1 < width:
                return False
            block = slice(end + 1 - width, end + 1)
            used = source.valid[block]
            if used.sum() < min_valid:
                return False
            if not math.isclose(
                    float(source.values[block][used].mean()), float(self.values[index]),
                    rel_tol=1e-12, abs_tol=1e-9
            ):
                return False
        return True


class ClearSkyIndexSeries(Series):
    step: int = 3600
    kind: TargetKind = TargetKind.IRRADIANCE

    def _check_values(self):
        checked = self.values[self.valid]
        if np.any(checked < 0) or np.any(checked > 2.0):
            raise ValueError("valid clear-sky index entries must lie in [0, 2]")


# ------- Site & sun ------- #

class SiteConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid", populate_by_name=True)

    latitude_deg: float = Field(
        default=48.66, ge=-90, le=90, validation_alias=AliasChoices("latitude_deg", "lat")
    )
    longitude_deg: float = Field(
        default=6.16, ge=-180, le=180, validation_alias=AliasChoices("longitude_deg", "lon")
    )
    altitude_m: float = Field(
        default=230.0, ge=-430, validation_alias=AliasChoices("altitude_m", "alt")
    )
    name: str = "nancy-brabois"


class SunPosition(BaseModel):
    model_config = ConfigDict(frozen=True)

    elevation_deg: float = Field(ge=-90, le=90)
    azimuth_deg: float = Field(ge=0, lt=360)
    # the NOAA series peaks at about +-23.47 deg
    declination_deg: float = Field(ge=-23.5, le=23.5)
    eot_minutes: float = Field(ge=-20, le=20)


# ------- Clear sky ------- #

class SolisParams(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    tau: float = Field(default=0.35, gt=0)
    g: float = Field(default=0.55, gt=0, le=1.5)
    i0_adj: float = Field(default=1450.0, gt=0)


# ------- Trend ------- #

class TrendEstimate(BaseModel):
    """Local affine model a0 + a1 * tau over a window ending at anchor_epoch."""
    model_config = ConfigDict(frozen=True)

    a0: float
    a1: float
    window_s: float = Field(gt=0)
    anchor_epoch: float = 0.0
    n_samples: int = Field(ge=5)

    @property
    def trend_at_anchor(self) -> float:
        return self.a0 + self.a1 * self.window_s

    @model_validator(mode="after")
    def _finite(self):
        if not math.isfinite(self.trend_at_anchor):
            raise ValueError("trend estimate is not finite")
        return self


class Decomposition(BaseModel):
    """Trend + fluctuation; slots without a full window are invalid in both parts."""
    model_config = ConfigDict(frozen=True)

    trend: Series
    fluctuation: Series


# ------- MLP ------- #

class TrainSpec(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid", populate_by_name=True)

    n_lags: int = Field(default=8, gt=0, validation_alias=AliasChoices("n_lags", "lags"))
    n_hidden: int = Field(default=10, gt=0, validation_alias=AliasChoices("n_hidden", "hidden"))
    learning_rate: float = Field(
        default=0.01, gt=0, validation_alias=AliasChoices("learning_rate", "lr")
    )
    momentum: float = Field(default=0.9, ge=0, lt=1)
    max_epochs: int = Field(default=200, gt=0, validation_alias=AliasChoices("max_epochs", "epochs"))
    patience: int = Field(default=20, gt=0)
    seed: int = Field(default=0, ge=0)
    validation_fraction: float = Field(default=0.2, gt=0, le=0.5)


class MlpModel(BaseModel):
    """n_lags -> tanh(n_hidden) -> identity(1), with unit scaling on both ends."""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    layer_sizes: Tuple[int, int, int]
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: float
    input_scale: float = Field(default=1.0, gt=0)
    output_scale: float = Field(default=1.0, gt=0)

    @field_validator("w1", "b1", "w2", mode="before")
    @classmethod
    def _as_array(cls, value):
        array = np.array(value, dtype=np.float64, copy=True)
        array.setflags(write=False)
        return array

    @model_validator(mode="after")
    def _check_shapes(self):
        n_in, n_hidden, n_out = self.layer_sizes
        if n_out != 1:
            raise ValueError("only a single output unit is supported")
        expected = {"w1": (n_hidden, n_in), "b1": (n_hidden,), "w2": (n_hidden,)}
        for name, shape in expected.items():
            actual = getattr(self, name).shape
            if actual != shape:
                raise ValueError(f"{name} has shape {actual}, expected {shape}")
        if not all(np.all(np.isfinite(getattr(self, name))) for name in expected):
            raise ValueError("model parameters must be finite")
        if not math.isfinite(self.b2):
            raise ValueError("model parameters must be finite")
        return self

    @property
    def n_lags(self) -> int:
        return self.layer_sizes[0]


class TrainResult(BaseModel):
    model_config = ConfigDict(frozen=True)

    model: MlpModel
    seed: int
    validation_rmse: float
    validation_nrmse: Optional[float] = None
    epochs_run: int = 0


# ------- Forecasting ------- #

class ForecastRecord(BaseModel):
    model_config = ConfigDict(frozen=True)

    issue_epoch: int
    horizon_s: int = Field(gt=0)
    method: ForecastMethod
    predicted: float = math.nan
    observed: float = math.nan
    valid: bool = False
    fallback: bool = False
    train_years: Optional[int] = None

    @model_validator(mode="after")
    def _finite_when_valid(self):
        if self.valid and not (math.isfinite(self.predicted) and math.isfinite(self.observed)):
            raise ValueError("valid records need finite predicted and observed values")
        return self

    @property
    def target_epoch(self) -> int:
        return self.issue_epoch + self.horizon_s

    @property
    def label(self) -> str:
        return entry_label(self.method, self.train_years)


def entry_label(method: ForecastMethod, train_years: Optional[int]) -> str:
    if train_years is None:
        return str(method)
    return f"{method} {train_years}y"


class BenchmarkConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    horizon_minutes: int = Field(default=60, gt=0)
    step_minutes: int = Field(default=60, gt=0)
    target: TargetKind = TargetKind.IRRADIATION
    train_years: List[int] = Field(default_factory=list)
    test_year: int = 2013
    methods: Optional[List[ForecastMethod]] = None

    site: SiteConfig = Field(default_factory=SiteConfig)
    solis: SolisParams = Field(default_factory=SolisParams)
    floor_wm2: float = Field(default=20.0, gt=0)
    train_spec: TrainSpec = Field(default_factory=TrainSpec)
    n_runs: int = Field(default=7, ge=1)

    daylight_min_elev: float = Field(default=1.0, ge=-5, le=20)
    min_valid_minutes: int = Field(default=MIN_VALID_MINUTES, ge=1, le=60)

    @model_validator(mode="before")
    @classmethod
    def _default_target(cls, data):
        if isinstance(data, dict) and data.get("target") is None:
            hourly = data.get("horizon_minutes", 60) == 60 and data.get("step_minutes", 60) == 60
            data = {**data, "target": TargetKind.IRRADIATION if hourly else TargetKind.IRRADIANCE}
        return data

    @model_validator(mode="after")
    def _consistent(self):
        problems = []
        if self.horizon_minutes % self.step_minutes:
            problems.append(
                f"horizon {self.horizon_minutes} min is not a multiple of step {self.step_minutes} min"
            )
        if 1440 % self.step_minutes:
            problems.append(f"step {self.step_minutes} min does not divide a day")
        if self.test_year in self.train_years:
            problems.append(f"test year {self.test_year} overlaps the train years {self.train_years}")
        if len(set(self.train_years)) != len(self.train_years):
            problems.append(f"train years repeat: {self.train_years}")
        learned = {ForecastMethod.MLP, ForecastMethod.CSI_MLP} & set(self.selected_methods)
        if learned and not self.train_years:
            problems.append(f"{sorted(learned)} need at least one train year")
        if problems:
            raise ValueError("; ".join(problems))
        return self

    @property
    def selected_methods(self) -> List[ForecastMethod]:
        if self.methods:
            return sorted(set(self.methods), key=lambda m: m.rank)
        if self.horizon_minutes == 60 and self.step_minutes == 60:
            if self.train_years:
                return list(ForecastMethod)
            return [ForecastMethod.P, ForecastMethod.SP, ForecastMethod.WM]
        return [ForecastMethod.SP, ForecastMethod.WM]

    @property
    def horizon_s(self) -> int:
        return self.horizon_minutes * 60

    @property
    def step_s(self) -> int:
        return self.step_minutes * 60


# ------- Evaluation ------- #

class EvalEntry(BaseModel):
    model_config = ConfigDict(frozen=True)

    method: ForecastMethod
    train_years: Optional[int] = None
    nl1: Optional[float] = Field(default=None, ge=0)
    nl2: Optional[float] = Field(default=None, ge=0)
    n_valid: int = 0
    n_fallback: int = 0

    @property
    def label(self) -> str:
        return entry_label(self.method, self.train_years)


class EvalReport(BaseModel):
    model_config = ConfigDict(frozen=True)

    entries: List[EvalEntry] = Field(default_factory=list)
    horizon_s: int = 3600
    step_s: int = 3600
    target: TargetKind = TargetKind.IRRADIATION
    test_start: Optional[int] = None
    test_end: Optional[int] = None

    @field_validator("entries")
    @classmethod
    def _enum_order(cls, entries: List[EvalEntry]) -> List[EvalEntry]:
        return sorted(entries, key=lambda e: (e.method.rank, e.train_years or 0))

    def entry(self, label: Union[str, ForecastMethod]) -> Optional[EvalEntry]:
        for item in self.entries:
            if item.label == str(label):
                return item
        return None


# ------- Synthetic data ------- #

CLOUD_PRESETS = {
    CloudRegime.CLEAR: {"rho": 0.0, "sigma": 0.0, "kt_mean": 1.0, "kt_floor": 0.05},
    CloudRegime.OVERCAST: {"rho": 0.0, "sigma": 0.0, "kt_mean": 0.2, "kt_floor": 0.05},
    # independent minute draws around a broken-cloud mean index: hourly means and the
    # trend window average them down, a single instantaneous sample keeps all of it.
    # The custom regime (rho 0.995 by default) gives persistent cloud spells instead.
    CloudRegime.BROKEN: {"rho": 0.0, "sigma": 0.2, "kt_mean": 0.6, "kt_floor": 0.05},
}


class CloudModel(BaseModel):
    """AR(1) clear-sky index; a non-custom regime overrides rho, sigma and the bounds."""
    model_config = ConfigDict(frozen=True, extra="forbid")

    seed: int = Field(default=0, ge=0)
    rho: float = Field(default=0.995, ge=0, lt=1)
    sigma: float = Field(default=0.03, ge=0)
    kt_floor: float = Field(default=0.05, ge=0, lt=1)
    kt_mean: float = Field(default=0.7, gt=0, le=1)
    regime: CloudRegime = CloudRegime.CUSTOM

    @model_validator(mode="before")
    @classmethod
    def _apply_preset(cls, data):
        if isinstance(data, dict):
            regime = CloudRegime(data.get("regime", CloudRegime.CUSTOM))
            if regime != CloudRegime.CUSTOM:
                data = {**data, **CLOUD_PRESETS[regime]}
        return data

    @model_validator(mode="after")
    def _mean_inside_bounds(self):
        if not self.kt_floor <= self.kt_mean <= 1.0:
            raise ValueError(f"kt_mean {self.kt_mean} outside [{self.kt_floor}, 1]")
        return self
