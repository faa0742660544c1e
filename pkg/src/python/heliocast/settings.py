from enum import StrEnum
from typing import Optional, Union

from pydantic_settings import BaseSettings, SettingsConfigDict


class TargetKind(StrEnum):
    IRRADIATION = 'irradiation'
    IRRADIANCE = 'irradiance'


class ForecastMethod(StrEnum):
    """Declaration order is the fixed report order and the ranking tie-break."""
    P = 'P'
    SP = 'SP'
    WM = 'WM'
    MLP = 'MLP'
    CSI_MLP = 'CSI_MLP'

    @property
    def rank(self) -> int:
        return list(ForecastMethod).index(self)


class CloudRegime(StrEnum):
    CLEAR = 'clear'
    BROKEN = 'broken'
    OVERCAST = 'overcast'
    CUSTOM = 'custom'


class Metric(StrEnum):
    L1 = 'nL1'
    L2 = 'nL2'


# physical ceiling for ground-level global irradiance, W/m2
MAX_IRRADIANCE = 1500.0
# an hour is valid with this many valid minutes out of 60
MIN_VALID_MINUTES = 55


class Settings(BaseSettings):
    """Process-level knobs; run parameters live in the RunConfig file."""
    model_config = SettingsConfigDict(env_prefix="HELIOCAST_", extra="ignore")

    log_file: Union[str, None] = None
    log_level: str = "INFO"

    sentry_dsn: Optional[str] = None


settings = Settings(_env_file=".env")
