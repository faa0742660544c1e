"""
Minute series ingestion and resampling.

Two resampling schemes produce the stepped target series:

  1. :py:func:`hourly_irradiation` - trailing mean of the minute samples
     ending at each step mark (irradiation, Wh/m2 for a 60 minute step),
  2. :py:func:`hourly_instantaneous` - the minute sample sitting exactly on
     each step mark (irradiance, W/m2).

Invalid slots always hold 0.0 and are flagged in ``valid``.
"""
import io
import math
from pathlib import Path
from typing import Optional, TextIO, Union

import numpy as np
import pandas as pd
from loguru import logger
from numpy.lib.stride_tricks import sliding_window_view
from pydantic import BaseModel, ConfigDict

from heliocast.errors import (
    DuplicateTimestampError,
    EmptyInputError,
    InsufficientDataError,
    IrregularStepError,
    MalformedRowError,
    NonMonotonicTimestampsError,
)
from heliocast.schemas import HourlySeries, MinuteSeries, Series
from heliocast.settings import MAX_IRRADIANCE, MIN_VALID_MINUTES, TargetKind

CSV_HEADER = "timestamp,irradiance_wm2"
ISO_FORMAT = "%Y-%m-%dT%H:%M:%SZ"


class IngestReport(BaseModel):
    """Parsed series plus the counts behind its invalid slots."""
    model_config = ConfigDict(frozen=True)

    series: MinuteSeries
    n_rows: int
    n_gaps: int = 0
    n_unparseable: int = 0
    n_negative: int = 0
    n_spikes: int = 0

    @property
    def n_invalid(self) -> int:
        return int((~self.series.valid).sum())


def _to_float(text) -> float:
    try:
        return float(text)
    except (TypeError, ValueError):
        return math.nan


def _fail(error_cls, msg: str):
    logger.error(msg)
    raise error_cls(msg)


def _is_header(row: pd.Series) -> bool:
    return ",".join(str(field).strip().lower() for field in row) == CSV_HEADER


def read_text(path: Path) -> str:
    """Read a CSV file as UTF-8; undecodable bytes are a malformed input."""
    try:
        return Path(path).read_text(encoding="utf-8")
    except UnicodeDecodeError as exc_info:
        _fail(MalformedRowError, f"{path} is not UTF-8 text: {exc_info}")


def read_csv(
        text: Union[str, TextIO],
        step: Optional[int] = None,
        ceiling: float = MAX_IRRADIANCE,
) -> IngestReport:
    """Parse ``timestamp,value`` rows onto a uniform grid.

    ``step`` is the grid step in seconds; ``None`` infers it from the first two
    rows (60 s for a single row). Slots absent from the file or holding
    unparseable, negative or above-ceiling values are kept but flagged invalid.
    Only the exact ``timestamp,irradiance_wm2`` header line is skipped.
    """
    if not isinstance(text, str):
        text = text.read()
    if not text.strip():
        _fail(EmptyInputError, "empty input: no rows to parse")

    try:
        frame = pd.read_csv(
            io.StringIO(text),
            header=None,
            dtype=str,
            keep_default_na=False,
            skip_blank_lines=True,
            skipinitialspace=True,
        )
    except pd.errors.ParserError as exc_info:
        _fail(MalformedRowError, f"malformed CSV: {exc_info}")
    if frame.shape[1] != 2:
        _fail(MalformedRowError, f"expected 2 columns (timestamp,value), got {frame.shape[1]}")

    frame.columns = ["timestamp", "value"]
    frame["timestamp"] = frame["timestamp"].str.strip()
    if len(frame) and _is_header(frame.iloc[0]):
        frame = frame.iloc[1:]
    if frame.empty:
        _fail(EmptyInputError, "empty input: header without rows")

    try:
        stamps = pd.to_datetime(frame["timestamp"], utc=True, format="ISO8601")
    except (ValueError, TypeError) as exc_info:
        _fail(MalformedRowError, f"unparseable timestamp: {exc_info}")

    seconds = (stamps - pd.Timestamp(0, tz="UTC")).dt.total_seconds().to_numpy()
    if np.any(seconds != np.floor(seconds)):
        _fail(IrregularStepError, "timestamps are not whole seconds")

    diffs = np.diff(seconds)
    if np.any(diffs < 0):
        row = int(np.flatnonzero(diffs < 0)[0]) + 1
        _fail(NonMonotonicTimestampsError, f"timestamps go backwards at data row {row + 1}")
    if np.any(diffs == 0):
        row = int(np.flatnonzero(diffs == 0)[0]) + 1
        _fail(DuplicateTimestampError, f"duplicate timestamp at data row {row + 1}")

    values = np.array([_to_float(v) for v in frame["value"]], dtype=np.float64)
    parsed = np.isfinite(values)
    negative = parsed & (values < 0)
    spikes = parsed & (values > ceiling)
    ok = parsed & ~negative & ~spikes

    if step is None:
        step = int(seconds[1] - seconds[0]) if len(seconds) >= 2 else 60
        logger.debug(f"inferred a {step} s step")
    if step <= 0:
        _fail(IrregularStepError, f"step must be positive, got {step}")

    start = int(seconds[0])
    offsets = seconds.astype(np.int64) - start
    if np.any(offsets % step):
        row = int(np.flatnonzero(offsets % step)[0])
        _fail(IrregularStepError, f"data row {row + 1} is off the {step} s grid")

    index = offsets // step
    length = int(index[-1]) + 1
    grid_values = np.zeros(length)
    grid_valid = np.zeros(length, dtype=bool)
    grid_values[index[ok]] = values[ok]
    grid_valid[index[ok]] = True

    report = IngestReport(
        series=MinuteSeries(
            start_epoch=start, step=step, values=grid_values, valid=grid_valid, ceiling=ceiling
        ),
        n_rows=len(frame),
        n_gaps=length - len(frame),
        n_unparseable=int((~parsed).sum()),
        n_negative=int(negative.sum()),
        n_spikes=int(spikes.sum()),
    )
    if report.n_negative or report.n_spikes or report.n_unparseable:
        logger.warning(
            f"{report.n_unparseable} unparseable, {report.n_negative} negative and "
            f"{report.n_spikes} above-ceiling samples flagged invalid"
        )
    if report.n_gaps:
        logger.warning(f"{report.n_gaps} grid slots missing from the input")
    return report


def parse_csv(
        text: Union[str, TextIO],
        step: Optional[int] = None,
        ceiling: float = MAX_IRRADIANCE,
) -> MinuteSeries:
    return read_csv(text, step=step, ceiling=ceiling).series


def format_value(value: float) -> str:
    """Shortest decimal that reads back to the same double."""
    return np.format_float_positional(float(value), unique=True, trim="-")


def format_epochs(epochs: np.ndarray) -> list:
    return list(pd.to_datetime(np.asarray(epochs, dtype=np.int64), unit="s", utc=True).strftime(ISO_FORMAT))


def serialize_csv(series: Series, header: bool = True) -> str:
    """Write the valid samples; missing slots are simply not written."""
    picked = np.flatnonzero(series.valid)
    stamps = format_epochs(series.epochs[picked])
    lines = [CSV_HEADER] if header else []
    lines.extend(f"{stamp},{format_value(v)}" for stamp, v in zip(stamps, series.values[picked]))
    return "\n".join(lines) + "\n"


def _require_minutes(ms: MinuteSeries):
    if ms.step != 60:
        msg = f"a minute series is required, got step {ms.step} s"
        logger.error(msg)
        raise ValueError(msg)


def scaled_min_valid(min_valid: int, width: int) -> int:
    """Validity threshold for a window of ``width`` minutes (min_valid is per 60)."""
    return max(1, math.ceil(min_valid * width / 60 - 1e-9))


def trailing_block_means(
        values: np.ndarray, valid: np.ndarray, ends: np.ndarray, width: int, min_valid: int
):
    """Mean of the valid samples in each block ``end - width + 1 .. end``.

    Returns ``(means, ok)``; blocks with fewer than ``min_valid`` valid samples
    are not ok and hold 0.0.
    """
    starts = np.asarray(ends, dtype=np.int64) - width + 1
    blocks = sliding_window_view(values, width)[starts]
    used = sliding_window_view(valid, width)[starts]
    counts = used.sum(axis=1)
    sums = np.where(used, blocks, 0.0).sum(axis=1)
    ok = counts >= min_valid
    means = np.where(ok, sums / np.maximum(counts, 1), 0.0)
    return means, ok


def _aligned_ends(ms: MinuteSeries, step_minutes: int, width: int) -> np.ndarray:
    epochs = ms.epochs
    on_mark = (epochs % (step_minutes * 60)) == 0
    return np.flatnonzero(on_mark & (np.arange(len(ms)) >= width - 1))


def hourly_irradiation(
        ms: MinuteSeries, step_minutes: int = 60, min_valid: int = MIN_VALID_MINUTES
) -> HourlySeries:
    """Trailing mean of the ``step_minutes`` samples ending at each step mark.

    ``min_valid`` is the number of valid minutes required per 60; shorter steps
    scale it proportionally.
    """
    _require_minutes(ms)
    if step_minutes <= 0:
        raise ValueError(f"step_minutes must be positive, got {step_minutes}")
    if len(ms) < step_minutes:
        msg = f"series of {len(ms)} minutes is shorter than one {step_minutes} minute step"
        logger.error(msg)
        raise InsufficientDataError(msg)

    ends = _aligned_ends(ms, step_minutes, step_minutes)
    if not ends.size:
        msg = f"no complete {step_minutes} minute window in the series"
        logger.error(msg)
        raise InsufficientDataError(msg)

    threshold = scaled_min_valid(min_valid, step_minutes)
    means, ok = trailing_block_means(ms.values, ms.valid, ends, step_minutes, threshold)
    result = HourlySeries(
        start_epoch=int(ms.epochs[ends[0]]),
        step=step_minutes * 60,
        values=means,
        valid=ok,
        kind=TargetKind.IRRADIATION,
        ceiling=ms.ceiling,
    )
    if not result.matches_source(ms, min_valid=threshold):
        msg = "trailing means do not match their minute source"
        logger.error(msg)
        raise ValueError(msg)
    logger.debug(f"built {len(result)} irradiation slots ({int(ok.sum())} valid) at {step_minutes} min")
    return result


def hourly_instantaneous(ms: MinuteSeries, step_minutes: int = 60) -> HourlySeries:
    """Minute samples sitting exactly on the ``step_minutes`` marks."""
    _require_minutes(ms)
    if step_minutes <= 0:
        msg = f"step_minutes must be positive, got {step_minutes}"
        logger.error(msg)
        raise ValueError(msg)

    picks = _aligned_ends(ms, step_minutes, 1)
    if not picks.size:
        msg = f"no {step_minutes} minute mark inside the series"
        logger.error(msg)
        raise InsufficientDataError(msg)

    return HourlySeries(
        start_epoch=int(ms.epochs[picks[0]]),
        step=step_minutes * 60,
        values=ms.values[picks],
        valid=ms.valid[picks],
        kind=TargetKind.IRRADIANCE,
        ceiling=ms.ceiling,
    )


def running_mean(
        ms: MinuteSeries, window_minutes: int = 60, min_valid: int = MIN_VALID_MINUTES
) -> MinuteSeries:
    """Minute-resolution trailing mean; the first ``window_minutes - 1`` slots are invalid."""
    _require_minutes(ms)
    n = len(ms)
    means = np.zeros(n)
    ok = np.zeros(n, dtype=bool)
    if n >= window_minutes:
        sums = np.concatenate(([0.0], np.cumsum(np.where(ms.valid, ms.values, 0.0))))
        counts = np.concatenate(([0], np.cumsum(ms.valid)))
        window_sums = sums[window_minutes:] - sums[:-window_minutes]
        window_counts = counts[window_minutes:] - counts[:-window_minutes]
        enough = window_counts >= scaled_min_valid(min_valid, window_minutes)
        # cumulative-sum round-off can dip just below zero at night
        means[window_minutes - 1:] = np.where(
            enough, np.maximum(window_sums / np.maximum(window_counts, 1), 0.0), 0.0
        )
        ok[window_minutes - 1:] = enough
    return MinuteSeries(
        start_epoch=ms.start_epoch, step=ms.step, values=means, valid=ok, ceiling=ms.ceiling
    )
