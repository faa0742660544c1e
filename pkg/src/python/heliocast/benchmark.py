"""
Benchmark orchestration: target series, MLP training per learning size and
one record per method for every daylight test slot.
"""
import io
from typing import Dict, List, Tuple

import numpy as np
import pandas as pd
from loguru import logger

from heliocast.clearsky import clear_sky_reference
from heliocast.errors import InsufficientDataError
from heliocast.forecasters import ForecastContext, Forecasters
from heliocast.mlp import best_of_runs, build_dataset
from heliocast.schemas import BenchmarkConfig, ForecastRecord, HourlySeries, MinuteSeries, TrainResult
from heliocast.series import format_epochs, hourly_instantaneous, hourly_irradiation
from heliocast.settings import ForecastMethod, TargetKind
from heliocast.solar import daylight_mask

RECORD_COLUMNS = [
    "issue_iso8601", "horizon_s", "method", "predicted", "observed", "valid", "fallback_flag", "train_years",
]
LEARNED_METHODS = (ForecastMethod.MLP, ForecastMethod.CSI_MLP)


def epoch_years(epochs: np.ndarray) -> np.ndarray:
    return np.asarray(epochs, dtype=np.int64).astype("datetime64[s]").astype("datetime64[Y]").astype(int) + 1970


def build_target(cfg: BenchmarkConfig, data: MinuteSeries) -> HourlySeries:
    if cfg.target == TargetKind.IRRADIATION:
        return hourly_irradiation(data, cfg.step_minutes, cfg.min_valid_minutes)
    return hourly_instantaneous(data, cfg.step_minutes)


def _shifted(mask: np.ndarray, steps: int) -> np.ndarray:
    """mask[i + steps] at index i, False past the end."""
    result = np.zeros(len(mask), dtype=bool)
    if steps < len(mask):
        result[:len(mask) - steps] = mask[steps:]
    return result


def slot_mask(daylight: np.ndarray, years: np.ndarray, horizon_steps: int, wanted) -> np.ndarray:
    """Issue slots in ``wanted`` years whose issue and target slots are valid daylight."""
    return daylight & _shifted(daylight, horizon_steps) & np.isin(years, list(wanted))


def _train_variants(
        cfg: BenchmarkConfig, ctx: ForecastContext, daylight: np.ndarray, years: np.ndarray
) -> Dict[Tuple[ForecastMethod, int], TrainResult]:
    """Best-of-n models for every learned method and learning size (most recent years)."""
    trained = {}
    learned = [m for m in cfg.selected_methods if m in LEARNED_METHODS]
    if not learned:
        return trained

    spec = cfg.train_spec
    h = ctx.horizon_steps
    grid_max = float(ctx.clear_sky.max())
    scale = grid_max if grid_max > 0 else 1.0
    csi = ctx.csi()
    csi_target_valid = ctx.target.valid & (ctx.clear_sky >= ctx.floor_wm2)
    ordered_years = sorted(cfg.train_years)

    for size in range(1, len(ordered_years) + 1):
        chosen = ordered_years[-size:]
        mask = slot_mask(daylight, years, h, chosen)
        for method in learned:
            if method == ForecastMethod.MLP:
                inputs, targets = build_dataset(ctx.target.values, ctx.target.valid, spec.n_lags, h, mask)
                input_scale = output_scale = scale
            else:
                inputs, targets = build_dataset(
                    csi.values, csi.valid, spec.n_lags, h, mask, target_valid=csi_target_valid
                )
                input_scale = output_scale = 1.0
            logger.info(f"training {method} on {chosen} ({len(targets)} pairs, best of {cfg.n_runs})")
            trained[(method, size)] = best_of_runs(
                inputs, targets, spec, cfg.n_runs, input_scale=input_scale, output_scale=output_scale
            )
    return trained


def run_benchmark(cfg: BenchmarkConfig, data: MinuteSeries) -> List[ForecastRecord]:
    """All records of one experiment, ordered by (method, learning size, issue time)."""
    target = build_target(cfg, data)
    if cfg.horizon_s % target.step:
        msg = f"horizon {cfg.horizon_s} s is not a multiple of the target step {target.step} s"
        logger.error(msg)
        raise ValueError(msg)

    ctx = ForecastContext(
        target=target,
        minutes=data,
        clear_sky=clear_sky_reference(target, cfg.site, cfg.solis),
        site=cfg.site,
        solis=cfg.solis,
        horizon_s=cfg.horizon_s,
        floor_wm2=cfg.floor_wm2,
        min_valid_minutes=cfg.min_valid_minutes,
    )
    daylight = daylight_mask(cfg.site, target, cfg.daylight_min_elev)
    years = epoch_years(target.epochs)

    issues = np.flatnonzero(slot_mask(daylight, years, ctx.horizon_steps, [cfg.test_year]))
    if not issues.size:
        msg = f"no valid daylight test slot in {cfg.test_year}"
        logger.error(msg)
        raise InsufficientDataError(msg)
    logger.info(
        f"benchmark {cfg.target} T={cfg.horizon_minutes} min step={cfg.step_minutes} min: "
        f"{len(issues)} test slots in {cfg.test_year}, methods {[str(m) for m in cfg.selected_methods]}"
    )

    trained = _train_variants(cfg, ctx, daylight, years)
    issue_epochs = target.epochs[issues]
    observed = target.values[issues + ctx.horizon_steps]

    records: List[ForecastRecord] = []
    for method in cfg.selected_methods:
        sizes = range(1, len(cfg.train_years) + 1) if method in LEARNED_METHODS else [None]
        for size in sizes:
            model = trained[(method, size)].model if size else None
            prediction = Forecasters[method](ctx, model=model).predict(issues)
            records.extend(
                ForecastRecord(
                    issue_epoch=int(epoch),
                    horizon_s=cfg.horizon_s,
                    method=method,
                    predicted=float(predicted),
                    observed=float(obs),
                    valid=bool(valid),
                    fallback=bool(fallback),
                    train_years=size,
                )
                for epoch, predicted, obs, valid, fallback in zip(
                    issue_epochs, prediction.predicted, observed, prediction.valid, prediction.fallback
                )
            )
            logger.debug(f"{method} {size or ''}: {int(prediction.valid.sum())} valid records")

    records.sort(key=lambda r: (r.method.rank, r.train_years or 0, r.issue_epoch))
    logger.info(f"benchmark finished with {len(records)} records")
    return records


# ------- output ------- #

def records_frame(records: List[ForecastRecord]) -> pd.DataFrame:
    return pd.DataFrame({
        "issue_epoch": [r.issue_epoch for r in records],
        "target_epoch": [r.target_epoch for r in records],
        "horizon_s": [r.horizon_s for r in records],
        "method": [str(r.method) for r in records],
        "predicted": [r.predicted for r in records],
        "observed": [r.observed for r in records],
        "valid": [r.valid for r in records],
        "fallback_flag": [r.fallback for r in records],
        "train_years": pd.array([r.train_years for r in records], dtype="Int64"),
    })


def records_csv(records: List[ForecastRecord]) -> str:
    """``issue_iso8601,horizon_s,method,predicted,observed,valid,fallback_flag,train_years``."""
    frame = records_frame(records)
    frame.insert(0, "issue_iso8601", format_epochs(frame["issue_epoch"].to_numpy()) if len(frame) else [])
    frame["valid"] = frame["valid"].map({True: "true", False: "false"})
    frame["fallback_flag"] = frame["fallback_flag"].map({True: "true", False: "false"})
    buffer = io.StringIO()
    frame[RECORD_COLUMNS].to_csv(buffer, index=False, float_format="%.17g", na_rep="", lineterminator="\n")
    return buffer.getvalue()


def plot_csv(records: List[ForecastRecord]) -> str:
    """``epoch,observed,P,SP,WM,MLP,CSI_MLP`` keyed by target epoch.

    Learned methods show their largest learning size; invalid forecasts are blank.
    """
    frame = records_frame(records)
    columns = ["epoch", "observed"] + [str(m) for m in ForecastMethod]
    buffer = io.StringIO()
    if frame.empty:
        pd.DataFrame(columns=columns).to_csv(buffer, index=False, lineterminator="\n")
        return buffer.getvalue()

    largest = frame.groupby("method")["train_years"].transform("max")
    keep = (frame["train_years"] == largest).fillna(False).astype(bool) | frame["train_years"].isna()
    frame = frame[keep]
    frame = frame.assign(predicted=frame["predicted"].where(frame["valid"]))

    observed = frame.groupby("target_epoch")["observed"].first()
    table = frame.pivot(index="target_epoch", columns="method", values="predicted")
    table = table.reindex(columns=[str(m) for m in ForecastMethod])
    table.insert(0, "observed", observed)
    table = table.reset_index().rename(columns={"target_epoch": "epoch"})
    table[columns].to_csv(buffer, index=False, float_format="%.10g", na_rep="", lineterminator="\n")
    return buffer.getvalue()
