"""Evaluation metrics: waveform similarity, anchor timing, cycle length,
the aggregate relative improvement ``delta_m`` and Welch's t-test.

Metrics that are undefined for their input (zero variance, empty truth)
raise :class:`UndefinedMetricError`; aggregation code catches it, logs and
drops the value.
"""
from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import stats

from .errors import InvalidInputError, UndefinedMetricError

log = logging.getLogger(__name__)

LOWER, HIGHER = "lower", "higher"
ROW_COLUMNS = ("run_id", "seed", "strategy", "T", "noise_type", "noise_db", "task", "metric", "value")


@dataclass(frozen=True)
class MetricSpec:
    task: str
    metric: str
    direction: str  # LOWER or HIGHER is better

    def __post_init__(self):
        if self.direction not in (LOWER, HIGHER):
            raise InvalidInputError(f"direction must be {LOWER!r} or {HIGHER!r}")

    @property
    def key(self) -> tuple[str, str]:
        return (self.task, self.metric)


DEFAULT_SPECS = (
    MetricSpec("waveform", "rmse", LOWER),
    MetricSpec("waveform", "pcc", HIGHER),
    MetricSpec("waveform", "r2", HIGHER),
    MetricSpec("anchor", "timing_error_ms", LOWER),
    MetricSpec("anchor", "mdr", LOWER),
    MetricSpec("length", "ppi_error_ms", LOWER),
)


def _pair(a, b):
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.size != b.size:
        raise InvalidInputError(f"length mismatch: {a.size} vs {b.size}")
    if a.size == 0:
        raise InvalidInputError("inputs are empty")
    return a, b


def rmse(a, b) -> float:
    a, b = _pair(a, b)
    return math.sqrt(float(np.mean((a - b) ** 2)))


def pcc(a, b) -> float:
    a, b = _pair(a, b)
    da, db = a - a.mean(), b - b.mean()
    va, vb = float(da @ da), float(db @ db)
    if va == 0 or vb == 0:
        raise UndefinedMetricError("PCC undefined for a constant trace")
    return float(np.clip((da @ db) / math.sqrt(va * vb), -1.0, 1.0))


def r_squared(truth, pred) -> float:
    truth, pred = _pair(truth, pred)
    ss_tot = float(np.sum((truth - truth.mean()) ** 2))
    if ss_tot == 0:
        raise UndefinedMetricError("R^2 undefined for a constant truth trace")
    return 1.0 - float(np.sum((truth - pred) ** 2)) / ss_tot


def anchor_match(truth, pred, tol_s: float = 0.150):
    """Greedy one-to-one nearest matching of predicted to true anchors.

    Candidate pairs within ``tol_s`` are taken in order of increasing
    distance (ties by truth then prediction index). Returns the timing errors
    of matched pairs, in truth order, and the missed-detection rate.
    """
    truth = np.asarray(truth, dtype=np.float64).ravel()
    pred = np.asarray(pred, dtype=np.float64).ravel()
    if truth.size == 0:
        raise UndefinedMetricError("no true anchors to match")
    pairs = sorted(
        (abs(t - p), i, j)
        for i, t in enumerate(truth)
        for j, p in enumerate(pred)
        if abs(t - p) <= tol_s
    )
    used_t, used_p, errors = set(), set(), {}
    for d, i, j in pairs:
        if i in used_t or j in used_p:
            continue
        used_t.add(i)
        used_p.add(j)
        errors[i] = d
    matched = np.array([errors[i] for i in sorted(errors)])
    return matched, 1.0 - len(errors) / truth.size


def ppi_error(truth_ppi, pred_ppi) -> float:
    """Mean absolute PPI difference; inputs and output in milliseconds."""
    a, b = _pair(truth_ppi, pred_ppi)
    return float(np.mean(np.abs(a - b)))


def delta_m(method: dict, baseline: dict, specs=DEFAULT_SPECS) -> float:
    """Mean signed relative change (percent) against a baseline.

    Averaged first over the metrics of each task, then over tasks. Changes
    count positive when they are improvements. Metrics with a zero baseline
    or an undefined value are dropped with a warning; a task left with no metric is dropped too.
    """
    by_task: dict[str, list[float]] = {}
    for spec in specs:
        if spec.key not in method or spec.key not in baseline:
            raise InvalidInputError(f"missing metric {spec.key}")
        m, b = float(method[spec.key]), float(baseline[spec.key])
        if b == 0 or not (math.isfinite(m) and math.isfinite(b)):
            log.warning("%s is zero or undefined (%r vs %r); excluded from delta_m", spec.key, m, b)
            continue
        sign = -1.0 if spec.direction == LOWER else 1.0
        by_task.setdefault(spec.task, []).append(sign * (m - b) / b)
    if not by_task:
        raise UndefinedMetricError("no usable metric for delta_m")
    return 100.0 * float(np.mean([np.mean(v) for v in by_task.values()]))


def welch_t(a, b) -> tuple[float, float]:
    """Welch's unequal-variance t statistic and two-sided p-value."""
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.size < 2 or b.size < 2:
        raise UndefinedMetricError("each sample needs at least 2 values")
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise UndefinedMetricError("samples must be finite")
    va, vb = a.var(ddof=1) / a.size, b.var(ddof=1) / b.size
    diff = a.mean() - b.mean()
    se2 = va + vb
    if se2 == 0:
        if diff == 0:
            return 0.0, 1.0
        raise UndefinedMetricError("both samples have zero variance")
    t = diff / math.sqrt(se2)
    dof = se2**2 / (va**2 / (a.size - 1) + vb**2 / (b.size - 1))
    return float(t), float(2.0 * stats.t.sf(abs(t), dof))


def mean_ci(values, z: float = 1.96) -> tuple[float, float]:
    """Mean and half-width ``z * std / sqrt(n)`` (half-width 0 for n < 2)."""
    v = np.asarray(values, dtype=np.float64)
    if v.size == 0:
        return float("nan"), float("nan")
    if v.size < 2:
        return float(v.mean()), 0.0
    return float(v.mean()), float(z * v.std(ddof=1) / math.sqrt(v.size))


def safe(fn, *args, **kwargs):
    """Call a metric, returning None (and logging) if it is undefined."""
    try:
        return fn(*args, **kwargs)
    except UndefinedMetricError as err:
        log.info("%s skipped: %s", getattr(fn, "__name__", fn), err)
        return None


# --- columnar report rows --------------------------------------------------


@dataclass(frozen=True)
class MetricRow:
    run_id: str
    seed: int
    strategy: str
    T: float
    noise_type: str
    noise_db: float
    task: str
    metric: str
    value: float


def _fmt(x) -> str:
    return repr(float(x)) if isinstance(x, float) else str(x)


def rows_to_csv(rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(ROW_COLUMNS)
    for r in rows:
        writer.writerow([_fmt(getattr(r, c)) for c in ROW_COLUMNS])
    return buf.getvalue()


def write_rows(rows, path) -> None:
    Path(path).write_text(rows_to_csv(rows))


def read_rows(path) -> list[MetricRow]:
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        if tuple(reader.fieldnames or ()) != ROW_COLUMNS:
            raise InvalidInputError(f"{path}: expected columns {ROW_COLUMNS}")
        return [
            MetricRow(
                run_id=d["run_id"],
                seed=int(d["seed"]),
                strategy=d["strategy"],
                T=float(d["T"]),
                noise_type=d["noise_type"],
                noise_db=float(d["noise_db"]),
                task=d["task"],
                metric=d["metric"],
                value=float(d["value"]),
            )
            for d in reader
        ]
