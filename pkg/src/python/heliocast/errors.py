class HeliocastError(Exception):
    """Base for every error raised by heliocast."""


# ------- configuration (exit code 2) ------- #

class ConfigError(HeliocastError):
    exit_code = 2


class UnknownConfigKey(ConfigError):
    ...


class InvalidBenchmarkConfig(ConfigError):
    ...


# ------- data (exit code 3) ------- #

class DataError(HeliocastError):
    exit_code = 3


class SeriesParseError(DataError):
    ...


class EmptyInputError(SeriesParseError):
    ...


class NonMonotonicTimestampsError(SeriesParseError):
    ...


class DuplicateTimestampError(SeriesParseError):
    ...


class IrregularStepError(SeriesParseError):
    ...


class MalformedRowError(SeriesParseError):
    ...


class InsufficientDataError(DataError):
    ...


class UnavailableEstimateError(DataError):
    """Not enough valid samples in a window; the forecast slot is reported unavailable."""


class CalibrationError(DataError):
    ...


class TrainingDivergedError(DataError):
    ...


class UndefinedMetricError(DataError):
    """Zero normalisation denominator."""
