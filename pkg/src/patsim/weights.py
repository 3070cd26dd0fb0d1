"""Feature weight learning and assignment.

The main learner is a gradient-descent wrapper around the similarity
classifier: the training error is the squared sum, over all training
patients and both class labels, of the difference between the true label
and the leave-one-out soft score, and weights move against its derivative
until error reductions peter out. Filter methods (chi-square, information
gain, gini) and file-based manual weights are provided as baselines.
"""

from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import vocab
from .errors import (
    BadConfig,
    KTooLarge,
    MalformedRow,
    NegativeWeight,
    SingleClassCohort,
    UnknownVariable,
)
from .knn import FeatureWeights, _weight_array

logger = logging.getLogger(__name__)

FILTER_METHODS = ("chi_square", "information_gain", "gini")


@dataclass
class TrainConfig:
    learning_rate: float = 0.3
    max_epochs: int = 200
    min_relative_improvement: float = 1e-6
    patience: int = 3
    k: int = 10
    initial_weights: FeatureWeights | None = None
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise BadConfig("learning_rate must be positive")
        if self.max_epochs < 1:
            raise BadConfig("max_epochs must be positive")
        if self.min_relative_improvement <= 0:
            raise BadConfig("min_relative_improvement must be positive")
        if self.patience < 1:
            raise BadConfig("patience must be positive")
        if self.k < 1:
            raise BadConfig("k must be positive")


@dataclass
class TrainTrace:
    errors: list = field(default_factory=list)        # training error per epoch, epoch 0 first
    weight_hashes: list = field(default_factory=list)
    epochs_run: int = 0
    stop_reason: str = "max_epochs"                   # "converged" or "max_epochs"
    best_error: float = float("inf")
    best_epoch: int = 0

    @property
    def best_so_far(self) -> list:
        return list(np.minimum.accumulate(self.errors))


def _stack_cohort(frames):
    """Sort by patient_id and stack into arrays (grid, statics, labels, ids)."""
    order = sorted(range(len(frames)), key=lambda i: frames[i].patient_id)
    frames = [frames[i] for i in order]
    grid = np.stack([f.feature_grid for f in frames])
    statics = np.stack([f.statics for f in frames])
    labels = np.array([f.label for f in frames], dtype=float)
    ids = [f.patient_id for f in frames]
    return grid, statics, labels, ids


def _distance_tensor(grid, statics) -> np.ndarray:
    """Per-variable pairwise squared distances, shape (40, n, n).

    Dynamic variables use the mean squared difference over their grid
    columns (gram-matrix form, clipped and symmetrized against rounding);
    statics are plain squared differences.
    """
    n, n_dyn, n_cols = grid.shape
    out = np.empty((vocab.N_VARIABLES, n, n))
    for v in range(n_dyn):
        # centering keeps a constant column's distances exactly zero
        x = grid[:, v, :] - grid[:, v, :].mean(axis=0)
        sq = (x * x).sum(axis=1)
        d = sq[:, None] + sq[None, :] - 2.0 * (x @ x.T)
        d = np.maximum(d, 0.0) / n_cols
        d = 0.5 * (d + d.T)
        np.fill_diagonal(d, 0.0)
        out[v] = d
    for j in range(statics.shape[1]):
        s = statics[:, j]
        out[n_dyn + j] = (s[:, None] - s[None, :]) ** 2
    return out


def _neighbor_sets(dist, w, k) -> np.ndarray:
    """Leave-one-out neighbor indices (n, k) at the given weights.

    Rows are in patient_id order (enforced by _stack_cohort), so a stable
    sort on distance realizes the ascending-patient_id tie-break.
    """
    n = dist.shape[1]
    if k > n - 1:
        raise KTooLarge(f"k={k} but only {n - 1} leave-one-out candidates")
    d2 = np.tensordot(w, dist, axes=(0, 0))
    np.fill_diagonal(d2, np.inf)
    return np.argsort(d2, axis=1, kind="stable")[:, :k]


def _soft_scores(dist, w, sets, labels) -> np.ndarray:
    rows = np.arange(dist.shape[1])[:, None]
    d2_sel = np.einsum("v,vnk->nk", w, dist[:, rows, sets])
    s = np.exp(-d2_sel)
    return (s * labels[sets]).sum(axis=1) / s.sum(axis=1)


def _error_value(yhat, labels) -> float:
    # one error term per class label: (y - yhat)^2 + ((1-y) - (1-yhat))^2
    return float(2.0 * ((labels - yhat) ** 2).sum())


def loo_neighbor_sets(frames, weights, k=10) -> np.ndarray:
    """Leave-one-out neighbor index sets for every training patient."""
    grid, statics, _, _ = _stack_cohort(frames)
    dist = _distance_tensor(grid, statics)
    return _neighbor_sets(dist, _weight_array(weights), k)


def training_error(frames, weights, k=10, neighbor_sets=None) -> float:
    """Leave-one-out training error at the given weights.

    With `neighbor_sets` (an (n, k) index array over patients in
    patient_id order) the sets are held fixed instead of re-selected,
    which is the function the analytic gradient differentiates.
    """
    grid, statics, labels, _ = _stack_cohort(frames)
    _check_two_classes(labels)
    dist = _distance_tensor(grid, statics)
    w = _weight_array(weights)
    sets = _neighbor_sets(dist, w, k) if neighbor_sets is None else neighbor_sets
    return _error_value(_soft_scores(dist, w, sets, labels), labels)


def _gradient_for_sets(dist, w, sets, labels) -> np.ndarray:
    rows = np.arange(dist.shape[1])[:, None]
    d_sel = dist[:, rows, sets]                       # (40, n, k)
    d2_sel = np.einsum("v,vnk->nk", w, d_sel)
    s = np.exp(-d2_sel)                               # (n, k)
    y_n = labels[sets]
    big_s = s.sum(axis=1)
    big_t = (s * y_n).sum(axis=1)
    yhat = big_t / big_s
    # d s_in / d w_v = -D2_v(i,n) * s_in, chained through T/S
    d_t = -np.einsum("vnk,nk->nv", d_sel, s * y_n)    # (n, 40)
    d_s = -np.einsum("vnk,nk->nv", d_sel, s)
    d_yhat = (d_t * big_s[:, None] - big_t[:, None] * d_s) / (big_s ** 2)[:, None]
    return -4.0 * ((labels - yhat)[:, None] * d_yhat).sum(axis=0)


def gradient(frames, weights, k=10) -> np.ndarray:
    """dE/dw per variable, neighbor sets held fixed at the current weights."""
    grid, statics, labels, _ = _stack_cohort(frames)
    _check_two_classes(labels)
    dist = _distance_tensor(grid, statics)
    w = _weight_array(weights)
    sets = _neighbor_sets(dist, w, k)
    return _gradient_for_sets(dist, w, sets, labels)


def _check_two_classes(labels):
    if len(np.unique(labels)) < 2:
        raise SingleClassCohort("training cohort contains a single class")


def _hash_weights(w) -> str:
    return hashlib.sha256(np.ascontiguousarray(w).tobytes()).hexdigest()[:16]


def train_gd(frames, config: TrainConfig, active=None) -> tuple:
    """Gradient-descent weight search; returns (FeatureWeights, TrainTrace).

    Each epoch re-selects leave-one-out neighbor sets at the current
    weights, takes one step w <- max(0, w - lr * dE/dw), and stops once the
    relative error improvement stays below the configured floor for
    `patience` consecutive epochs. The best-error weights seen are
    returned, not necessarily the last iterate. `active` optionally
    restricts the search to a boolean subset of variables; the rest are
    pinned to zero.
    """
    grid, statics, labels, _ = _stack_cohort(frames)
    _check_two_classes(labels)
    if len(frames) < config.k + 1:
        raise KTooLarge(f"need at least k+1={config.k + 1} patients, got {len(frames)}")
    if active is None:
        active = np.ones(vocab.N_VARIABLES, dtype=bool)
    else:
        active = np.asarray(active, dtype=bool)

    if config.initial_weights is None:
        w = np.where(active, 1.0, 0.0)
    else:
        w = _weight_array(config.initial_weights) * active

    dist = _distance_tensor(grid, statics)
    sets = _neighbor_sets(dist, w, config.k)
    err = _error_value(_soft_scores(dist, w, sets, labels), labels)

    trace = TrainTrace()
    trace.errors.append(err)
    trace.weight_hashes.append(_hash_weights(w))
    best_err, best_w, best_epoch = err, w.copy(), 0

    plateau = 0
    for epoch in range(1, config.max_epochs + 1):
        grad = _gradient_for_sets(dist, w, sets, labels)
        w = np.maximum(w - config.learning_rate * grad, 0.0)
        w *= active
        sets = _neighbor_sets(dist, w, config.k)
        new_err = _error_value(_soft_scores(dist, w, sets, labels), labels)
        trace.errors.append(new_err)
        trace.weight_hashes.append(_hash_weights(w))
        trace.epochs_run = epoch
        if new_err < best_err:
            best_err, best_w, best_epoch = new_err, w.copy(), epoch
        rel_improvement = (err - new_err) / err if err > 0 else 0.0
        plateau = plateau + 1 if rel_improvement < config.min_relative_improvement else 0
        err = new_err
        if plateau >= config.patience:
            trace.stop_reason = "converged"
            break
    else:
        trace.stop_reason = "max_epochs"

    trace.best_error = best_err
    trace.best_epoch = best_epoch
    return FeatureWeights(best_w), trace


# ---------------------------------------------------------------------------
# filter weighting

N_BINS = 10


def _equal_frequency_bins(x) -> np.ndarray:
    edges = np.quantile(x, np.linspace(0.1, 0.9, N_BINS - 1))
    return np.searchsorted(edges, x, side="right")


def _contingency(bins, labels) -> np.ndarray:
    table = np.zeros((N_BINS, 2))
    for b, y in zip(bins, labels.astype(int)):
        table[b, y] += 1
    return table[table.sum(axis=1) > 0]


def _chi_square_score(table) -> float:
    total = table.sum()
    expected = np.outer(table.sum(axis=1), table.sum(axis=0)) / total
    with np.errstate(invalid="ignore", divide="ignore"):
        terms = np.where(expected > 0, (table - expected) ** 2 / expected, 0.0)
    return float(terms.sum())


def _entropy(counts) -> float:
    total = counts.sum()
    if total == 0:
        return 0.0
    p = counts[counts > 0] / total
    return float(-(p * np.log2(p)).sum())


def _information_gain_score(table) -> float:
    total = table.sum()
    h_y = _entropy(table.sum(axis=0))
    h_cond = sum((row.sum() / total) * _entropy(row) for row in table)
    return float(h_y - h_cond)


def _gini(counts) -> float:
    total = counts.sum()
    if total == 0:
        return 0.0
    p = counts / total
    return float(1.0 - (p ** 2).sum())


def _gini_score(table) -> float:
    total = table.sum()
    g_y = _gini(table.sum(axis=0))
    g_cond = sum((row.sum() / total) * _gini(row) for row in table)
    return float(g_y - g_cond)


_SCORERS = {
    "chi_square": _chi_square_score,
    "information_gain": _information_gain_score,
    "gini": _gini_score,
}


def filter_score(frames, method) -> np.ndarray:
    """Raw per-variable filter scores against the binary label.

    Dynamic variables are summarized by their grid-row mean, discretized
    into 10 equal-frequency bins over the training set.
    """
    if method not in _SCORERS:
        raise BadConfig(f"unknown filter method {method!r}")
    grid, statics, labels, _ = _stack_cohort(frames)
    _check_two_classes(labels)
    summaries = np.concatenate([grid.mean(axis=2), statics], axis=1)
    scorer = _SCORERS[method]
    scores = np.empty(vocab.N_VARIABLES)
    for v in range(vocab.N_VARIABLES):
        bins = _equal_frequency_bins(summaries[:, v])
        scores[v] = scorer(_contingency(bins, labels))
    return scores


def filter_weights(frames, method, active=None) -> FeatureWeights:
    """Filter scores normalized to sum to the active variable count.

    The normalization makes the weight mass comparable with the all-ones
    (unweighted) configuration. All-zero scores fall back to uniform.
    """
    scores = filter_score(frames, method)
    if active is None:
        active = np.ones(vocab.N_VARIABLES, dtype=bool)
    else:
        active = np.asarray(active, dtype=bool)
    scores = np.where(active, np.maximum(scores, 0.0), 0.0)
    total = scores.sum()
    n_active = int(active.sum())
    if total <= 0:
        return FeatureWeights(np.where(active, 1.0, 0.0))
    return FeatureWeights(scores * (n_active / total))


# ---------------------------------------------------------------------------
# weight files

WEIGHTS_HEADER = "variable,weight"


def load_manual_weights(source) -> FeatureWeights:
    """Read `variable,weight` rows; unlisted variables default to 0.

    The header line is optional. Unknown variable names and negative
    weights are rejected.
    """
    if isinstance(source, (str, Path)):
        with open(source, "r", encoding="utf-8") as fh:
            return load_manual_weights(fh)
    values = np.zeros(vocab.N_VARIABLES)
    listed = set()
    for line_no, raw in enumerate(source, start=1):
        line = raw.strip()
        if not line or line == WEIGHTS_HEADER:
            continue
        name, sep, weight_s = line.rpartition(",")
        if not sep:
            raise MalformedRow(line_no, "expected variable,weight")
        if name not in vocab.VARIABLE_INDEX:
            raise UnknownVariable(name)
        try:
            w = float(weight_s)
        except ValueError:
            raise MalformedRow(line_no, f"non-numeric weight {weight_s!r}") from None
        if w < 0:
            raise NegativeWeight(name, w)
        values[vocab.VARIABLE_INDEX[name]] = w
        listed.add(name)
    missing = vocab.N_VARIABLES - len(listed)
    if missing:
        logger.warning("manual weights file leaves %d variables at weight 0", missing)
    return FeatureWeights(values)


def save_weights(weights: FeatureWeights, path) -> None:
    """Write all 40 weights as `variable,weight` rows in canonical order."""
    w = _weight_array(weights)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(WEIGHTS_HEADER + "\n")
        for name, value in zip(vocab.ALL_VARIABLES, w):
            fh.write(f"{name},{repr(float(value))}\n")


def save_trace(trace: TrainTrace, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("epoch,error\n")
        for epoch, err in enumerate(trace.errors):
            fh.write(f"{epoch},{repr(float(err))}\n")
