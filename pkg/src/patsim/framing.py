"""Standardization of irregular event lists into fixed-width representations.

Two representations are produced from the same raw events:

* time-frame grid: each dynamic variable averaged into fixed windows
  (default 2-hour windows over 48 hours, i.e. 24 values per variable),
* aggregation table: six summary statistics per dynamic variable
  (minimum, maximum, median, first, last, count).

Both paths share the same treatment of statics and the same min-max
scaling discipline: statistics are fitted on training patients only and
reused to transform anything else.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import vocab
from .errors import BadConfig, DimensionMismatch, EmptyCohort

AGG_FUNCTIONS = ("minimum", "maximum", "median", "first", "last", "count")
N_AGG = len(AGG_FUNCTIONS)


@dataclass
class FramedPatient:
    """One patient on the time-frame grid.

    Before imputation `dynamic` holds NaN wherever `mask` is False; after
    impute_and_scale it is dense with every entry in [0, 1]. The mask is
    never modified by imputation.
    """

    patient_id: str
    dynamic: np.ndarray   # (36, n_buckets) float
    mask: np.ndarray      # (36, n_buckets) bool, True = observed
    statics: np.ndarray   # (4,) float, NaN = unobserved
    label: int

    @property
    def feature_grid(self) -> np.ndarray:
        return self.dynamic


@dataclass
class AggregatedPatient:
    """One patient summarized by the six aggregation statistics."""

    patient_id: str
    table: np.ndarray     # (36, 6) float, columns in AGG_FUNCTIONS order
    statics: np.ndarray   # (4,) float
    label: int

    @property
    def feature_grid(self) -> np.ndarray:
        return self.table


def _static_values(events) -> np.ndarray:
    statics = np.full(vocab.N_STATIC, np.nan)
    for ev in events:
        idx = vocab.STATIC_INDEX.get(ev.variable)
        if idx is not None and np.isnan(statics[idx]):
            statics[idx] = ev.value
    return statics


def bucketize(patient_id, events, label, window_hours=2, horizon_hours=48) -> FramedPatient:
    """Average a patient's events into fixed time buckets.

    Bucket t covers minutes [60*window_hours*t, 60*window_hours*(t+1));
    a cell is the arithmetic mean of the observations falling in it.
    Events at or beyond the horizon are ignored. Statics take the first
    observed value. Unobserved cells are NaN with mask False.
    """
    if window_hours <= 0 or horizon_hours <= 0 or horizon_hours % window_hours != 0:
        raise BadConfig(f"horizon {horizon_hours}h not divisible by window {window_hours}h")
    n_buckets = horizon_hours // window_hours
    width = 60 * window_hours
    sums = np.zeros((vocab.N_DYNAMIC, n_buckets))
    counts = np.zeros((vocab.N_DYNAMIC, n_buckets), dtype=int)
    for ev in events:
        v = vocab.DYNAMIC_INDEX.get(ev.variable)
        if v is None:
            continue
        if ev.minute >= horizon_hours * 60:
            continue
        t = ev.minute // width
        sums[v, t] += ev.value
        counts[v, t] += 1
    mask = counts > 0
    with np.errstate(invalid="ignore"):
        dynamic = np.where(mask, sums / np.maximum(counts, 1), np.nan)
    return FramedPatient(patient_id, dynamic, mask, _static_values(events), int(label))


def frame_cohort(cohort, window_hours=2, horizon_hours=48) -> list:
    """Bucketize every patient; output sorted by patient_id."""
    return [
        bucketize(pid, cohort.patients[pid], cohort.label(pid), window_hours, horizon_hours)
        for pid in cohort.patient_ids
    ]


def sparsity(frames) -> float:
    """Fraction of dynamic cells with no observation, before imputation."""
    if not frames:
        raise EmptyCohort("sparsity of an empty cohort is undefined")
    shape = frames[0].mask.shape
    total = 0
    unobserved = 0
    for f in frames:
        if f.mask.shape != shape:
            raise DimensionMismatch("frames do not share grid dimensions")
        total += f.mask.size
        unobserved += f.mask.size - int(f.mask.sum())
    return unobserved / total


@dataclass
class ScalingStats:
    """Training-set statistics for imputing and scaling time-frame grids.

    Mins/maxes pool all buckets of a variable; bucket means are per
    (variable, bucket) and NaN where that bucket was never observed.
    Degenerate variables (never observed, or constant) scale to 0.5.
    """

    n_buckets: int
    dyn_min: np.ndarray          # (36,)
    dyn_max: np.ndarray          # (36,)
    dyn_mean: np.ndarray         # (36,) pooled mean over observed cells
    dyn_bucket_mean: np.ndarray  # (36, n_buckets)
    dyn_degenerate: np.ndarray   # (36,) bool
    static_min: np.ndarray       # (4,)
    static_max: np.ndarray       # (4,)
    static_mean: np.ndarray      # (4,)
    static_degenerate: np.ndarray  # (4,) bool


def fit_scaling(frames) -> ScalingStats:
    """Fit per-variable scaling statistics from training frames only."""
    if not frames:
        raise EmptyCohort("cannot fit scaling statistics on an empty cohort")
    n_buckets = frames[0].dynamic.shape[1]
    dyn = np.stack([f.dynamic for f in frames])          # (n, 36, nb)
    mask = np.stack([f.mask for f in frames])
    statics = np.stack([f.statics for f in frames])      # (n, 4)
    if dyn.shape[1] != vocab.N_DYNAMIC:
        raise DimensionMismatch("expected 36 dynamic variables")

    dyn_min = np.where(mask, dyn, np.inf).min(axis=(0, 2))
    dyn_max = np.where(mask, dyn, -np.inf).max(axis=(0, 2))
    observed_var = mask.any(axis=(0, 2))
    dyn_min = np.where(observed_var, dyn_min, np.nan)
    dyn_max = np.where(observed_var, dyn_max, np.nan)

    cell_counts = mask.sum(axis=0)                       # (36, nb)
    cell_sums = np.where(mask, dyn, 0.0).sum(axis=0)
    with np.errstate(invalid="ignore"):
        dyn_bucket_mean = np.where(cell_counts > 0, cell_sums / np.maximum(cell_counts, 1), np.nan)
    var_counts = cell_counts.sum(axis=1)
    var_sums = cell_sums.sum(axis=1)
    with np.errstate(invalid="ignore"):
        dyn_mean = np.where(var_counts > 0, var_sums / np.maximum(var_counts, 1), np.nan)
    dyn_degenerate = ~observed_var | (dyn_max <= dyn_min)

    s_mask = ~np.isnan(statics)
    s_observed = s_mask.any(axis=0)
    static_min = np.where(s_observed, np.where(s_mask, statics, np.inf).min(axis=0), np.nan)
    static_max = np.where(s_observed, np.where(s_mask, statics, -np.inf).max(axis=0), np.nan)
    with np.errstate(invalid="ignore"):
        static_mean = np.where(
            s_observed,
            np.where(s_mask, statics, 0.0).sum(axis=0) / np.maximum(s_mask.sum(axis=0), 1),
            np.nan,
        )
    static_degenerate = ~s_observed | (static_max <= static_min)

    return ScalingStats(
        n_buckets=n_buckets,
        dyn_min=dyn_min, dyn_max=dyn_max, dyn_mean=dyn_mean,
        dyn_bucket_mean=dyn_bucket_mean, dyn_degenerate=dyn_degenerate,
        static_min=static_min, static_max=static_max, static_mean=static_mean,
        static_degenerate=static_degenerate,
    )


def _locf(values: np.ndarray) -> np.ndarray:
    """Carry the last observed value forward along each row (NaN = missing)."""
    n_rows, n_cols = values.shape
    observed = ~np.isnan(values)
    idx = np.where(observed, np.arange(n_cols)[None, :], 0)
    np.maximum.accumulate(idx, axis=1, out=idx)
    return values[np.arange(n_rows)[:, None], idx]


def _scale01(values, lo, hi, degenerate):
    span = hi - lo
    with np.errstate(invalid="ignore", divide="ignore"):
        scaled = (values - lo) / span
    scaled = np.clip(scaled, 0.0, 1.0)
    return np.where(degenerate, 0.5, scaled)


def impute_frame(frame: FramedPatient, stats: ScalingStats) -> FramedPatient:
    """Fill unobserved cells on raw values: carry-forward, then bucket means.

    Values already present are never modified, so an already-dense frame
    passes through unchanged.
    """
    if frame.dynamic.shape != (vocab.N_DYNAMIC, stats.n_buckets):
        raise DimensionMismatch(
            f"frame grid {frame.dynamic.shape} does not match stats ({vocab.N_DYNAMIC}, {stats.n_buckets})"
        )
    filled = _locf(frame.dynamic)
    gaps = np.isnan(filled)
    if gaps.any():
        fallback = np.where(np.isnan(stats.dyn_bucket_mean),
                            stats.dyn_mean[:, None], stats.dyn_bucket_mean)
        fallback = np.where(np.isnan(fallback), 0.0, fallback)
        filled = np.where(gaps, fallback, filled)
    statics = np.where(np.isnan(frame.statics),
                       np.where(np.isnan(stats.static_mean), 0.0, stats.static_mean),
                       frame.statics)
    return replace(frame, dynamic=filled, statics=statics, mask=frame.mask.copy())


def impute_and_scale(frame: FramedPatient, stats: ScalingStats) -> FramedPatient:
    """Dense, [0, 1]-scaled copy of `frame`; mask preserved unchanged."""
    dense = impute_frame(frame, stats)
    dynamic = _scale01(dense.dynamic, stats.dyn_min[:, None], stats.dyn_max[:, None],
                       stats.dyn_degenerate[:, None])
    statics = _scale01(dense.statics, stats.static_min, stats.static_max,
                       stats.static_degenerate)
    return replace(dense, dynamic=dynamic, statics=statics)


def aggregate(patient_id, events, label, horizon_hours=48) -> AggregatedPatient:
    """Summarize each dynamic variable by the six aggregation statistics.

    Events must be sorted by minute; first/last follow that order. A
    variable with no events gets count 0 and NaN for the other five.
    """
    per_var = [[] for _ in range(vocab.N_DYNAMIC)]
    for ev in events:
        v = vocab.DYNAMIC_INDEX.get(ev.variable)
        if v is None or ev.minute >= horizon_hours * 60:
            continue
        per_var[v].append(ev.value)
    table = np.full((vocab.N_DYNAMIC, N_AGG), np.nan)
    for v, values in enumerate(per_var):
        table[v, 5] = len(values)
        if values:
            arr = np.asarray(values, dtype=float)
            table[v, 0] = arr.min()
            table[v, 1] = arr.max()
            table[v, 2] = float(np.median(arr))
            table[v, 3] = arr[0]
            table[v, 4] = arr[-1]
    return AggregatedPatient(patient_id, table, _static_values(events), int(label))


def aggregate_cohort(cohort, horizon_hours=48) -> list:
    return [
        aggregate(pid, cohort.patients[pid], cohort.label(pid), horizon_hours)
        for pid in cohort.patient_ids
    ]


@dataclass
class AggregationStats:
    """Training statistics for the aggregation table, per (variable, function)."""

    col_min: np.ndarray        # (36, 6)
    col_max: np.ndarray        # (36, 6)
    col_mean: np.ndarray       # (36, 6)
    col_degenerate: np.ndarray  # (36, 6) bool
    static_min: np.ndarray
    static_max: np.ndarray
    static_mean: np.ndarray
    static_degenerate: np.ndarray


def fit_aggregation_scaling(aggs) -> AggregationStats:
    if not aggs:
        raise EmptyCohort("cannot fit aggregation statistics on an empty cohort")
    tables = np.stack([a.table for a in aggs])           # (n, 36, 6)
    statics = np.stack([a.statics for a in aggs])
    observed = ~np.isnan(tables)
    any_obs = observed.any(axis=0)
    col_min = np.where(any_obs, np.where(observed, tables, np.inf).min(axis=0), np.nan)
    col_max = np.where(any_obs, np.where(observed, tables, -np.inf).max(axis=0), np.nan)
    with np.errstate(invalid="ignore"):
        col_mean = np.where(
            any_obs,
            np.where(observed, tables, 0.0).sum(axis=0) / np.maximum(observed.sum(axis=0), 1),
            np.nan,
        )
    col_degenerate = ~any_obs | (col_max <= col_min)

    s_mask = ~np.isnan(statics)
    s_observed = s_mask.any(axis=0)
    static_min = np.where(s_observed, np.where(s_mask, statics, np.inf).min(axis=0), np.nan)
    static_max = np.where(s_observed, np.where(s_mask, statics, -np.inf).max(axis=0), np.nan)
    with np.errstate(invalid="ignore"):
        static_mean = np.where(
            s_observed,
            np.where(s_mask, statics, 0.0).sum(axis=0) / np.maximum(s_mask.sum(axis=0), 1),
            np.nan,
        )
    static_degenerate = ~s_observed | (static_max <= static_min)
    return AggregationStats(col_min, col_max, col_mean, col_degenerate,
                            static_min, static_max, static_mean, static_degenerate)


def scale_aggregates(agg: AggregatedPatient, stats: AggregationStats) -> AggregatedPatient:
    """Dense, [0, 1]-scaled copy; missing statistics take training means."""
    if agg.table.shape != stats.col_min.shape:
        raise DimensionMismatch("aggregation table shape does not match stats")
    filled = np.where(np.isnan(agg.table),
                      np.where(np.isnan(stats.col_mean), 0.0, stats.col_mean),
                      agg.table)
    table = _scale01(filled, stats.col_min, stats.col_max, stats.col_degenerate)
    statics = np.where(np.isnan(agg.statics),
                       np.where(np.isnan(stats.static_mean), 0.0, stats.static_mean),
                       agg.statics)
    statics = _scale01(statics, stats.static_min, stats.static_max, stats.static_degenerate)
    return AggregatedPatient(agg.patient_id, table, statics, agg.label)


# ---------------------------------------------------------------------------
# file formats


def _dynamic_header(n_buckets):
    cols = [f"d{v:02d}_t{t:02d}" for v in range(vocab.N_DYNAMIC) for t in range(n_buckets)]
    cols += [f"s{i}_{name.lower()}" for i, name in enumerate(vocab.STATIC_VARIABLES)]
    return ",".join(["patient_id", "label"] + cols)


def write_frames(frames, path, mask_path=None) -> None:
    """Write dense frames as CSV (variable-major cells), plus 0/1 mask file."""
    if not frames:
        raise EmptyCohort("no frames to write")
    n_buckets = frames[0].dynamic.shape[1]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(_dynamic_header(n_buckets) + "\n")
        for f in frames:
            cells = [repr(float(x)) for x in f.dynamic.ravel()]
            cells += [repr(float(x)) for x in f.statics]
            fh.write(",".join([f.patient_id, str(f.label)] + cells) + "\n")
    if mask_path is not None:
        with open(mask_path, "w", encoding="utf-8") as fh:
            cols = [f"d{v:02d}_t{t:02d}" for v in range(vocab.N_DYNAMIC) for t in range(n_buckets)]
            fh.write(",".join(["patient_id"] + cols) + "\n")
            for f in frames:
                bits = [str(int(b)) for b in f.mask.ravel()]
                fh.write(",".join([f.patient_id] + bits) + "\n")


def read_frames(path, mask_path=None) -> list:
    """Read frames written by write_frames; mask defaults to all-observed."""
    masks = {}
    if mask_path is not None and Path(mask_path).exists():
        with open(mask_path, "r", encoding="utf-8") as fh:
            next(fh)
            for line in fh:
                parts = line.rstrip("\n").split(",")
                masks[parts[0]] = np.array([c == "1" for c in parts[1:]], dtype=bool)
    frames = []
    with open(path, "r", encoding="utf-8") as fh:
        header = next(fh).rstrip("\n").split(",")
        n_cells = len(header) - 2 - vocab.N_STATIC
        n_buckets = n_cells // vocab.N_DYNAMIC
        for line in fh:
            parts = line.rstrip("\n").split(",")
            pid, label = parts[0], int(parts[1])
            values = np.array([float(x) for x in parts[2:]], dtype=float)
            dynamic = values[:n_cells].reshape(vocab.N_DYNAMIC, n_buckets)
            statics = values[n_cells:]
            mask = masks.get(pid)
            if mask is None:
                mask = np.ones((vocab.N_DYNAMIC, n_buckets), dtype=bool)
            else:
                mask = mask.reshape(vocab.N_DYNAMIC, n_buckets)
            frames.append(FramedPatient(pid, dynamic, mask, statics, label))
    return frames


def write_scaling_stats(stats: ScalingStats, path) -> None:
    """Persist scaling statistics as a plain-text key=value file."""
    def fmt(x):
        return "nan" if np.isnan(x) else repr(float(x))

    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"n_buckets={stats.n_buckets}\n")
        for v in range(vocab.N_DYNAMIC):
            fh.write(f"dyn_min.{v}={fmt(stats.dyn_min[v])}\n")
            fh.write(f"dyn_max.{v}={fmt(stats.dyn_max[v])}\n")
            fh.write(f"dyn_mean.{v}={fmt(stats.dyn_mean[v])}\n")
            fh.write(f"dyn_degenerate.{v}={int(stats.dyn_degenerate[v])}\n")
            for t in range(stats.n_buckets):
                fh.write(f"dyn_bucket_mean.{v}.{t}={fmt(stats.dyn_bucket_mean[v, t])}\n")
        for i in range(vocab.N_STATIC):
            fh.write(f"static_min.{i}={fmt(stats.static_min[i])}\n")
            fh.write(f"static_max.{i}={fmt(stats.static_max[i])}\n")
            fh.write(f"static_mean.{i}={fmt(stats.static_mean[i])}\n")
            fh.write(f"static_degenerate.{i}={int(stats.static_degenerate[i])}\n")


def read_scaling_stats(path) -> ScalingStats:
    kv = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line or "=" not in line:
                continue
            key, value = line.split("=", 1)
            kv[key] = value
    n_buckets = int(kv["n_buckets"])
    stats = ScalingStats(
        n_buckets=n_buckets,
        dyn_min=np.full(vocab.N_DYNAMIC, np.nan),
        dyn_max=np.full(vocab.N_DYNAMIC, np.nan),
        dyn_mean=np.full(vocab.N_DYNAMIC, np.nan),
        dyn_bucket_mean=np.full((vocab.N_DYNAMIC, n_buckets), np.nan),
        dyn_degenerate=np.zeros(vocab.N_DYNAMIC, dtype=bool),
        static_min=np.full(vocab.N_STATIC, np.nan),
        static_max=np.full(vocab.N_STATIC, np.nan),
        static_mean=np.full(vocab.N_STATIC, np.nan),
        static_degenerate=np.zeros(vocab.N_STATIC, dtype=bool),
    )
    for v in range(vocab.N_DYNAMIC):
        stats.dyn_min[v] = float(kv[f"dyn_min.{v}"])
        stats.dyn_max[v] = float(kv[f"dyn_max.{v}"])
        stats.dyn_mean[v] = float(kv[f"dyn_mean.{v}"])
        stats.dyn_degenerate[v] = bool(int(kv[f"dyn_degenerate.{v}"]))
        for t in range(n_buckets):
            stats.dyn_bucket_mean[v, t] = float(kv[f"dyn_bucket_mean.{v}.{t}"])
    for i in range(vocab.N_STATIC):
        stats.static_min[i] = float(kv[f"static_min.{i}"])
        stats.static_max[i] = float(kv[f"static_max.{i}"])
        stats.static_mean[i] = float(kv[f"static_mean.{i}"])
        stats.static_degenerate[i] = bool(int(kv[f"static_degenerate.{i}"]))
    return stats
