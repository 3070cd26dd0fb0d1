"""Evaluation protocol: splits, stratified folds, metrics, and the
Friedman-gated pairwise Wilcoxon comparison between methods.

Cross-validation refits scaling statistics and feature weights on the
training folds of every split, so nothing leaks from a held-out fold.
Fold F-measures are the quantity the statistical tests compare.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import chi2 as chi2_dist
from scipy.stats import norm as norm_dist

from . import framing, vocab
from .errors import (
    BadConfig,
    DegenerateMatrix,
    DimensionMismatch,
    SingleClassCohort,
    TooFewPairs,
    TooFewPerClass,
)
from .knn import FeatureWeights, Model, classify_batch
from .streams import substream
from .weights import TrainConfig, filter_weights, train_gd

REPRESENTATIONS = ("timeseries", "aggregation")
WEIGHTINGS = ("gd", "none", "manual", "chi2", "infogain", "gini")
FEATURE_SETS = ("all", "dynamic_only", "static_only")
KINDS = ("knn", "majority", "linear")

_FILTER_NAMES = {"chi2": "chi_square", "infogain": "information_gain", "gini": "gini"}


@dataclass
class FoldMetrics:
    fold_index: int
    tp: int
    fp: int
    fn: int
    tn: int
    precision: float
    recall: float
    f_measure: float


def prf(tp, fp, fn) -> tuple:
    """Precision, recall, F-measure on the positive class; 0/0 counts as 0."""
    precision = tp / (tp + fp) if tp + fp > 0 else 0.0
    recall = tp / (tp + fn) if tp + fn > 0 else 0.0
    f = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    return precision, recall, f


def fold_metrics(fold_index, y_true, y_pred) -> FoldMetrics:
    y_true = np.asarray(y_true, dtype=int)
    y_pred = np.asarray(y_pred, dtype=int)
    tp = int(((y_true == 1) & (y_pred == 1)).sum())
    fp = int(((y_true == 0) & (y_pred == 1)).sum())
    fn = int(((y_true == 1) & (y_pred == 0)).sum())
    tn = int(((y_true == 0) & (y_pred == 0)).sum())
    precision, recall, f = prf(tp, fp, fn)
    return FoldMetrics(fold_index, tp, fp, fn, tn, precision, recall, f)


def split_dev_validation(patient_ids, labels, seed) -> tuple:
    """Stratified 50/50 split, deterministic under the seed.

    Per class the development side gets the ceiling half, so each half's
    class counts are within one patient of an exact halving.
    """
    patient_ids = list(patient_ids)
    labels = np.asarray(labels, dtype=int)
    if len(np.unique(labels)) < 2:
        raise SingleClassCohort("both classes are required for a stratified split")
    rng = substream(seed, "split")
    dev, validation = [], []
    for cls in (0, 1):
        members = [pid for pid, y in zip(patient_ids, labels) if y == cls]
        members.sort()
        rng.shuffle(members)
        half = (len(members) + 1) // 2
        dev.extend(members[:half])
        validation.extend(members[half:])
    return sorted(dev), sorted(validation)


def kfold(patient_ids, labels, k=20, seed=0) -> list:
    """Stratified k disjoint folds covering the input; sizes differ by <= 1.

    Shuffled members of each class are dealt round-robin with a running
    fold pointer, so both the per-class counts and the total sizes stay
    balanced.
    """
    patient_ids = list(patient_ids)
    labels = np.asarray(labels, dtype=int)
    for cls in (0, 1):
        if int((labels == cls).sum()) < k:
            raise TooFewPerClass(f"class {cls} has fewer than {k} members")
    rng = substream(seed, "folds")
    folds = [[] for _ in range(k)]
    pointer = 0
    for cls in (0, 1):
        members = [pid for pid, y in zip(patient_ids, labels) if y == cls]
        members.sort()
        rng.shuffle(members)
        for pid in members:
            folds[pointer % k].append(pid)
            pointer += 1
    return [sorted(f) for f in folds]


@dataclass
class MethodSpec:
    """One classifier configuration entering a comparison."""

    name: str
    kind: str = "knn"                      # knn | majority | linear
    representation: str = "timeseries"     # timeseries | aggregation
    weighting: str = "gd"                  # gd | none | manual | chi2 | infogain | gini
    features: str = "all"                  # all | dynamic_only | static_only
    k: int = 10
    mode: str = "majority"
    threshold: float = 0.5
    learning_rate: float = 0.3
    max_epochs: int = 200
    manual_weights: FeatureWeights | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise BadConfig(f"unknown method kind {self.kind!r}")
        if self.representation not in REPRESENTATIONS:
            raise BadConfig(f"unknown representation {self.representation!r}")
        if self.weighting not in WEIGHTINGS:
            raise BadConfig(f"unknown weighting {self.weighting!r}")
        if self.features not in FEATURE_SETS:
            raise BadConfig(f"unknown feature set {self.features!r}")
        if self.weighting == "manual" and self.manual_weights is None:
            raise BadConfig("manual weighting requires a loaded weights file")

    def active_mask(self) -> np.ndarray:
        active = np.ones(vocab.N_VARIABLES, dtype=bool)
        if self.features == "dynamic_only":
            active[vocab.N_DYNAMIC:] = False
        elif self.features == "static_only":
            active[: vocab.N_DYNAMIC] = False
        return active


def _is_aggregation(patients) -> bool:
    return isinstance(patients[0], framing.AggregatedPatient)


def _scale_split(train_raw, test_raw):
    if _is_aggregation(train_raw):
        stats = framing.fit_aggregation_scaling(train_raw)
        scale = framing.scale_aggregates
    else:
        stats = framing.fit_scaling(train_raw)
        scale = framing.impute_and_scale
    return [scale(p, stats) for p in train_raw], [scale(p, stats) for p in test_raw]


def _learn_weights(train_scaled, method: MethodSpec) -> FeatureWeights:
    active = method.active_mask()
    if method.weighting == "gd":
        cfg = TrainConfig(learning_rate=method.learning_rate,
                          max_epochs=method.max_epochs, k=method.k)
        learned, _ = train_gd(train_scaled, cfg, active=active)
        return learned
    if method.weighting == "none":
        return FeatureWeights(np.where(active, 1.0, 0.0))
    if method.weighting == "manual":
        return FeatureWeights(method.manual_weights.values * active)
    return filter_weights(train_scaled, _FILTER_NAMES[method.weighting], active=active)


def _flatten(patients) -> np.ndarray:
    return np.stack([
        np.concatenate([p.feature_grid.ravel(), p.statics]) for p in patients
    ])


def _fit_linear_scorer(x, y, iters=300, lr=0.5):
    """Plain full-batch logistic fit; a deterministic stand-in baseline."""
    w = np.zeros(x.shape[1])
    b = 0.0
    n = len(y)
    for _ in range(iters):
        z = np.clip(x @ w + b, -30, 30)
        p = 1.0 / (1.0 + np.exp(-z))
        err = p - y
        w -= lr * (x.T @ err) / n
        b -= lr * err.mean()
    return w, b


def _predict_fold(train_scaled, test_scaled, method: MethodSpec):
    y_train = np.array([p.label for p in train_scaled], dtype=float)
    if method.kind == "majority":
        majority = int(y_train.mean() >= 0.5)
        return np.full(len(test_scaled), majority, dtype=int)
    if method.kind == "linear":
        w, b = _fit_linear_scorer(_flatten(train_scaled), y_train)
        z = _flatten(test_scaled) @ w + b
        return (z >= 0).astype(int)
    model = Model(train_scaled, _learn_weights(train_scaled, method),
                  k=method.k, prediction_mode=method.mode, threshold=method.threshold)
    labels, _ = classify_batch(test_scaled, model)
    return labels


def cross_validate(patients, method: MethodSpec, k_folds=20, seed=0, workers=1) -> list:
    """Stratified k-fold cross-validation of one method.

    `patients` are pre-imputation representations (framed or aggregated);
    scaling statistics and feature weights are refit on the training folds
    of each split. Returns one FoldMetrics per fold, ordered by fold index.
    """
    patients = sorted(patients, key=lambda p: p.patient_id)
    by_id = {p.patient_id: p for p in patients}
    ids = [p.patient_id for p in patients]
    labels = np.array([p.label for p in patients], dtype=int)
    folds = kfold(ids, labels, k=k_folds, seed=seed)

    def run_fold(i):
        test_ids = set(folds[i])
        train_raw = [p for p in patients if p.patient_id not in test_ids]
        test_raw = [by_id[pid] for pid in folds[i]]
        train_scaled, test_scaled = _scale_split(train_raw, test_raw)
        y_pred = _predict_fold(train_scaled, test_scaled, method)
        y_true = [p.label for p in test_raw]
        return fold_metrics(i, y_true, y_pred)

    if workers and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run_fold, range(k_folds)))
    else:
        results = [run_fold(i) for i in range(k_folds)]
    return sorted(results, key=lambda m: m.fold_index)


# ---------------------------------------------------------------------------
# statistical tests


def _average_ranks(values) -> np.ndarray:
    """Ranks 1..n with ties sharing the average of their positions."""
    values = np.asarray(values, dtype=float)
    order = np.argsort(values, kind="stable")
    ranks = np.empty(len(values))
    i = 0
    while i < len(values):
        j = i
        while j + 1 < len(values) and values[order[j + 1]] == values[order[i]]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def friedman(matrix) -> tuple:
    """Friedman chi-square test over a folds-by-methods matrix.

    Methods are ranked within each fold (average ranks on ties); the
    statistic uses the standard chi-square form with tie correction, and
    the p-value comes from the chi-square distribution with M-1 degrees of
    freedom. A matrix whose every fold is fully tied yields (0, 1).
    """
    matrix = np.asarray(matrix, dtype=float)
    if matrix.ndim != 2 or matrix.shape[0] < 2 or matrix.shape[1] < 2:
        raise DegenerateMatrix("need at least 2 folds and 2 methods")
    n, m = matrix.shape
    ranks = np.stack([_average_ranks(row) for row in matrix])
    rank_sums = ranks.sum(axis=0)
    ssbn = float((rank_sums ** 2).sum())
    numerator = 12.0 / (n * m * (m + 1)) * ssbn - 3.0 * n * (m + 1)
    ties = 0.0
    for row in matrix:
        _, counts = np.unique(row, return_counts=True)
        ties += float((counts ** 3 - counts).sum())
    correction = 1.0 - ties / (n * m * (m ** 2 - 1))
    statistic = numerator / correction if correction > 0 else 0.0
    statistic = max(statistic, 0.0)
    p_value = float(chi2_dist.sf(statistic, m - 1))
    return float(statistic), p_value


def _exact_signed_rank_p(ranks2, m2) -> float:
    """Exact two-sided p over all 2^n sign assignments.

    `ranks2` are doubled ranks (always integers), `m2` the doubled observed
    min(W+, W-). Counts subset sums by dynamic programming, which
    enumerates the full sign-assignment distribution.
    """
    total = int(ranks2.sum())
    counts = np.zeros(total + 1)
    counts[0] = 1.0
    for r in ranks2:
        r = int(r)
        counts[r:] += counts[: total + 1 - r].copy()
    n_assignments = 2.0 ** len(ranks2)
    low = counts[: m2 + 1].sum()
    if total - m2 <= m2:
        return 1.0
    high = counts[total - m2 :].sum()
    return float(min(1.0, (low + high) / n_assignments))


def wilcoxon_signed_rank(a, b) -> tuple:
    """Two-sided Wilcoxon signed-rank test on paired samples.

    Zero differences are dropped; tied absolute differences get average
    ranks. Exact p by enumeration of the 2^n sign assignments for n <= 25,
    normal approximation with continuity and tie correction otherwise.
    Returns (min(W+, W-), p).
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise DimensionMismatch("paired samples must have equal length")
    d = a - b
    d = d[d != 0]
    n = len(d)
    if n < 5:
        raise TooFewPairs(f"only {n} non-zero differences, need at least 5")
    ranks = _average_ranks(np.abs(d))
    w_plus = float(ranks[d > 0].sum())
    w_minus = float(ranks[d < 0].sum())
    statistic = min(w_plus, w_minus)
    if n <= 25:
        ranks2 = np.rint(2 * ranks).astype(int)
        p = _exact_signed_rank_p(ranks2, int(round(2 * statistic)))
        return statistic, p
    mean = n * (n + 1) / 4.0
    var = n * (n + 1) * (2 * n + 1) / 24.0
    _, counts = np.unique(ranks, return_counts=True)
    var -= float((counts ** 3 - counts).sum()) / 48.0
    correction = 0.5 * np.sign(w_plus - mean)
    z = (w_plus - mean - correction) / np.sqrt(var)
    p = float(min(1.0, 2.0 * norm_dist.sf(abs(z))))
    return statistic, p


# ---------------------------------------------------------------------------
# comparison report


@dataclass
class PairwiseResult:
    method_a: str
    method_b: str
    statistic: float
    p_value: float
    significant: bool


@dataclass
class ComparisonReport:
    methods: list
    f_measures: np.ndarray                 # (n_folds, n_methods)
    mean_precision: dict = field(default_factory=dict)
    mean_recall: dict = field(default_factory=dict)
    mean_f_measure: dict = field(default_factory=dict)
    friedman_statistic: float = 0.0
    friedman_p: float = 1.0
    pairwise: list = field(default_factory=list)
    alpha: float = 0.05


def compare(fold_metrics_by_method: dict, alpha=0.05) -> ComparisonReport:
    """Friedman test across methods, pairwise Wilcoxon only if it fires.

    Input maps method name to its per-fold metrics (all methods over the
    same folds). Pairwise tests run on fold F-measures and only when the
    Friedman p-value is below alpha.
    """
    methods = list(fold_metrics_by_method)
    if len(methods) < 2:
        raise DegenerateMatrix("need at least two methods to compare")
    n_folds = {len(v) for v in fold_metrics_by_method.values()}
    if len(n_folds) != 1:
        raise DegenerateMatrix("methods cover different numbers of folds")
    f_matrix = np.column_stack([
        [m.f_measure for m in fold_metrics_by_method[name]] for name in methods
    ])
    report = ComparisonReport(methods=methods, f_measures=f_matrix, alpha=alpha)
    for name in methods:
        ms = fold_metrics_by_method[name]
        report.mean_precision[name] = float(np.mean([m.precision for m in ms]))
        report.mean_recall[name] = float(np.mean([m.recall for m in ms]))
        report.mean_f_measure[name] = float(np.mean([m.f_measure for m in ms]))
    report.friedman_statistic, report.friedman_p = friedman(f_matrix)
    if report.friedman_p < alpha:
        for i in range(len(methods)):
            for j in range(i + 1, len(methods)):
                try:
                    stat, p = wilcoxon_signed_rank(f_matrix[:, i], f_matrix[:, j])
                except TooFewPairs:
                    # methods with (near-)identical fold scores carry no
                    # evidence of a difference
                    stat, p = 0.0, 1.0
                report.pairwise.append(PairwiseResult(
                    methods[i], methods[j], stat, p, p < alpha))
    return report


def report_to_dict(report: ComparisonReport) -> dict:
    return {
        "methods": report.methods,
        "alpha": report.alpha,
        "mean_precision": report.mean_precision,
        "mean_recall": report.mean_recall,
        "mean_f_measure": report.mean_f_measure,
        "fold_f_measures": [[float(x) for x in row] for row in report.f_measures],
        "friedman": {
            "statistic": report.friedman_statistic,
            "p_value": report.friedman_p,
        },
        "pairwise": [
            {
                "method_a": p.method_a,
                "method_b": p.method_b,
                "statistic": p.statistic,
                "p_value": p.p_value,
                "significant": p.significant,
            }
            for p in report.pairwise
        ],
    }


def report_to_text(report: ComparisonReport) -> str:
    """Aligned plain-text table of per-method precision/recall/F plus tests."""
    width = max(len(name) for name in report.methods)
    lines = [f"{'method':<{width}}  precision  recall  f_measure"]
    for name in report.methods:
        lines.append(
            f"{name:<{width}}  {report.mean_precision[name]:9.4f}"
            f"  {report.mean_recall[name]:6.4f}  {report.mean_f_measure[name]:9.4f}"
        )
    lines.append("")
    lines.append(
        f"Friedman chi-square = {report.friedman_statistic:.6f}, "
        f"p = {report.friedman_p:.6g}"
    )
    if report.pairwise:
        lines.append(f"pairwise Wilcoxon signed-rank (alpha = {report.alpha}):")
        for p in report.pairwise:
            mark = "*" if p.significant else " "
            lines.append(
                f"  {p.method_a} vs {p.method_b}: W = {p.statistic:.1f}, "
                f"p = {p.p_value:.6g} {mark}"
            )
    else:
        lines.append("pairwise tests not run (Friedman not significant)")
    return "\n".join(lines) + "\n"


def save_fold_metrics(metrics, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("fold,tp,fp,fn,tn,precision,recall,f_measure\n")
        for m in metrics:
            fh.write(
                f"{m.fold_index},{m.tp},{m.fp},{m.fn},{m.tn},"
                f"{repr(m.precision)},{repr(m.recall)},{repr(m.f_measure)}\n"
            )


def load_fold_metrics(path) -> list:
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        next(fh)
        for line in fh:
            parts = line.rstrip("\n").split(",")
            out.append(FoldMetrics(
                int(parts[0]), int(parts[1]), int(parts[2]), int(parts[3]),
                int(parts[4]), float(parts[5]), float(parts[6]), float(parts[7]),
            ))
    return out
