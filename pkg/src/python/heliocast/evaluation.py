"""
Normalized error metrics and the comparison report.

    nL1 = sum |predicted - observed| / sum |observed|
    nL2 = ||predicted - observed||_2 / ||observed||_2

Both are taken over valid records only. A zero denominator makes the metric
undefined rather than 0.
"""
import io
import math
from collections import defaultdict
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from loguru import logger

from heliocast.errors import UndefinedMetricError
from heliocast.schemas import EvalEntry, EvalReport, ForecastRecord
from heliocast.settings import ForecastMethod, Metric, TargetKind

TABLE_ORDER = [ForecastMethod.P, ForecastMethod.WM, ForecastMethod.SP, ForecastMethod.MLP, ForecastMethod.CSI_MLP]
TABLE_NAMES = {ForecastMethod.CSI_MLP: "CSI-MLP"}


def _arrays(predicted, observed) -> Tuple[np.ndarray, np.ndarray]:
    predicted = np.asarray(predicted, dtype=np.float64)
    observed = np.asarray(observed, dtype=np.float64)
    if predicted.shape != observed.shape:
        raise ValueError(f"predicted and observed differ in shape ({predicted.shape} != {observed.shape})")
    if not predicted.size:
        raise UndefinedMetricError("no valid record to score")
    return predicted, observed


def nl1(predicted, observed) -> float:
    predicted, observed = _arrays(predicted, observed)
    denominator = np.abs(observed).sum()
    if denominator == 0:
        raise UndefinedMetricError("sum of |observed| is zero")
    return float(np.abs(predicted - observed).sum() / denominator)


def nl2(predicted, observed) -> float:
    predicted, observed = _arrays(predicted, observed)
    denominator = np.linalg.norm(observed)
    if denominator == 0:
        raise UndefinedMetricError("norm of observed is zero")
    return float(np.linalg.norm(predicted - observed) / denominator)


def _scored(records: Iterable[ForecastRecord], exclude_fallback: bool = False):
    picked = [r for r in records if r.valid and not (exclude_fallback and r.fallback)]
    return [r.predicted for r in picked], [r.observed for r in picked]


def normalized_l1(records: Iterable[ForecastRecord], exclude_fallback: bool = False) -> float:
    return nl1(*_scored(records, exclude_fallback))


def normalized_l2(records: Iterable[ForecastRecord], exclude_fallback: bool = False) -> float:
    return nl2(*_scored(records, exclude_fallback))


def _or_none(metric, records, exclude_fallback) -> Optional[float]:
    try:
        return metric(records, exclude_fallback)
    except UndefinedMetricError as exc_info:
        logger.warning(f"{metric.__name__} undefined: {exc_info}")
        return None


def evaluate(
        records: Sequence[ForecastRecord],
        horizon_s: int,
        step_s: int,
        target: TargetKind,
        exclude_fallback: bool = False,
) -> EvalReport:
    """One entry per (method, learning size) present in ``records``."""
    groups = defaultdict(list)
    for record in records:
        groups[(record.method, record.train_years)].append(record)

    entries = []
    for (method, train_years), group in groups.items():
        entries.append(EvalEntry(
            method=method,
            train_years=train_years,
            nl1=_or_none(normalized_l1, group, exclude_fallback),
            nl2=_or_none(normalized_l2, group, exclude_fallback),
            n_valid=sum(r.valid and not (exclude_fallback and r.fallback) for r in group),
            n_fallback=sum(r.valid and r.fallback for r in group),
        ))

    issues = [r.issue_epoch for r in records]
    report = EvalReport(
        entries=entries,
        horizon_s=horizon_s,
        step_s=step_s,
        target=target,
        test_start=min(issues) if issues else None,
        test_end=max(issues) if issues else None,
    )
    for entry in report.entries:
        logger.info(f"{entry.label}: nL1={entry.nl1} nL2={entry.nl2} ({entry.n_valid} valid)")
    return report


def rank_methods(report: EvalReport, metric: Metric = Metric.L2) -> List[str]:
    """Entry labels by ascending score; ties keep method order, undefined scores go last."""
    if len(report.entries) < 2:
        msg = f"ranking needs at least 2 entries, got {len(report.entries)}"
        logger.error(msg)
        raise ValueError(msg)
    attribute = "nl1" if metric == Metric.L1 else "nl2"

    def _key(entry: EvalEntry):
        score = getattr(entry, attribute)
        return (score is None, math.inf if score is None else score, entry.method.rank, entry.train_years or 0)

    return [entry.label for entry in sorted(report.entries, key=_key)]


def relative_improvement(a: float, b: float) -> float:
    """Improvement of score ``a`` over score ``b`` in percent: 100 (b - a) / b."""
    if b <= 0:
        msg = f"reference score must be positive, got {b}"
        logger.error(msg)
        raise ValueError(msg)
    return 100.0 * (b - a) / b


# ------- rendering ------- #

def _column(entry: EvalEntry) -> str:
    name = TABLE_NAMES.get(entry.method, str(entry.method))
    return name if entry.train_years is None else f"{name} {entry.train_years}y"


def _table_entries(report: EvalReport) -> List[EvalEntry]:
    return sorted(report.entries, key=lambda e: (TABLE_ORDER.index(e.method), e.train_years or 0))


def to_table(report: EvalReport) -> str:
    """Aligned text table: one column per entry, one row per metric."""
    entries = _table_entries(report)
    frame = pd.DataFrame(
        [[e.nl1 for e in entries], [e.nl2 for e in entries]],
        index=[str(Metric.L1), str(Metric.L2)],
        columns=[_column(e) for e in entries],
        dtype="float64",
    )
    span = ""
    if report.test_start is not None:
        start = pd.Timestamp(report.test_start, unit="s", tz="UTC").strftime("%Y-%m-%d")
        end = pd.Timestamp(report.test_end, unit="s", tz="UTC").strftime("%Y-%m-%d")
        span = f", test {start} .. {end}"
    header = (
        f"{report.target}, horizon {report.horizon_s // 60} min, "
        f"step {report.step_s // 60} min{span}"
    )
    body = frame.to_string(na_rep="n/a", float_format=lambda v: f"{v:.4f}")
    return f"{header}\n{body}\n"


def to_csv(report: EvalReport) -> str:
    frame = pd.DataFrame({
        "method": [str(e.method) for e in report.entries],
        "train_years": pd.array([e.train_years for e in report.entries], dtype="Int64"),
        "label": [e.label for e in report.entries],
        "nL1": [e.nl1 for e in report.entries],
        "nL2": [e.nl2 for e in report.entries],
        "n_valid": [e.n_valid for e in report.entries],
        "n_fallback": [e.n_fallback for e in report.entries],
    })
    buffer = io.StringIO()
    frame.to_csv(buffer, index=False, float_format="%.10g", na_rep="", lineterminator="\n")
    return buffer.getvalue()
