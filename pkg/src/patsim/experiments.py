"""Experiment presets exercising the three comparison hypotheses.

* exp1: the similarity classifier against non-similarity stand-in
  baselines (majority-class and a plain linear scorer on aggregates).
* exp2: time-frame representation against the aggregation representation,
  plus static-only and dynamic-only ablations.
* exp3: gradient-descent weighting against filters, manual weights and no
  weighting.

Each preset splits the cohort 50/50, runs stratified cross-validation on
the validation half only, and gates pairwise Wilcoxon tests on a
significant Friedman test.
"""

from __future__ import annotations

import logging

import numpy as np

from . import framing
from .config import RunConfig
from .errors import BadConfig
from .evaluation import ComparisonReport, MethodSpec, compare, cross_validate, split_dev_validation
from .synth import SynthResult, SynthSpec, generate

logger = logging.getLogger(__name__)

PRESETS = ("exp1", "exp2", "exp3")


def default_cohort(preset, config: RunConfig, n_patients=1000, profile=None) -> SynthResult:
    """Synthetic stand-in cohort when no data files are supplied."""
    if profile is None:
        profile = "planted"
    spec = SynthSpec(n_patients=n_patients, seed=config.seed, profile=profile)
    return generate(spec)


def _knn_method(name, config: RunConfig, **overrides) -> MethodSpec:
    base = dict(
        kind="knn",
        representation=config.representation,
        weighting=config.weighting,
        features="all",
        k=config.k,
        mode=config.mode,
        threshold=config.threshold,
        learning_rate=config.learning_rate,
        max_epochs=config.max_epochs,
    )
    base.update(overrides)
    return MethodSpec(name=name, **base)


def preset_methods(preset, config: RunConfig, manual_weights=None) -> list:
    if preset == "exp1":
        return [
            _knn_method("similarity_gd", config, representation="timeseries", weighting="gd"),
            MethodSpec(name="majority_class", kind="majority"),
            MethodSpec(name="linear_aggregates", kind="linear", representation="aggregation"),
        ]
    if preset == "exp2":
        return [
            _knn_method("timeseries", config, representation="timeseries", weighting="gd"),
            _knn_method("aggregation", config, representation="aggregation", weighting="gd"),
            _knn_method("dynamic_only", config, representation="timeseries",
                        weighting="gd", features="dynamic_only"),
            _knn_method("static_only", config, representation="timeseries",
                        weighting="gd", features="static_only"),
        ]
    if preset == "exp3":
        methods = [
            _knn_method("gd", config, weighting="gd"),
            _knn_method("chi2", config, weighting="chi2"),
            _knn_method("infogain", config, weighting="infogain"),
            _knn_method("gini", config, weighting="gini"),
            _knn_method("none", config, weighting="none"),
        ]
        if manual_weights is not None:
            methods.insert(1, _knn_method("manual", config, weighting="manual",
                                          manual_weights=manual_weights))
        else:
            logger.warning("exp3: no manual weights file supplied, skipping the manual arm")
        return methods
    raise BadConfig(f"unknown experiment preset {preset!r}")


def _representations_needed(methods) -> set:
    reps = set()
    for m in methods:
        if m.kind == "knn":
            reps.add(m.representation)
        elif m.kind == "linear":
            reps.add(m.representation)
        else:
            reps.add("timeseries")
    return reps


def run_experiment(preset, config: RunConfig, cohort, manual_weights=None) -> ComparisonReport:
    """Run one preset end to end on a raw cohort and compare the methods."""
    methods = preset_methods(preset, config, manual_weights=manual_weights)

    ids = cohort.patient_ids
    labels = [cohort.label(pid) for pid in ids]
    _, validation_ids = split_dev_validation(ids, labels, config.seed)
    validation = set(validation_ids)

    raw = {}
    if "timeseries" in _representations_needed(methods):
        frames = framing.frame_cohort(cohort, config.window_hours, config.horizon_hours)
        raw["timeseries"] = [f for f in frames if f.patient_id in validation]
    if "aggregation" in _representations_needed(methods):
        aggs = framing.aggregate_cohort(cohort, config.horizon_hours)
        raw["aggregation"] = [a for a in aggs if a.patient_id in validation]

    workers = config.effective_workers()
    fold_metrics = {}
    for method in methods:
        rep = method.representation if method.kind != "majority" else "timeseries"
        logger.info("cross-validating %s (%s)", method.name, rep)
        fold_metrics[method.name] = cross_validate(
            raw[rep], method, k_folds=config.folds, seed=config.seed, workers=workers,
        )
    return compare(fold_metrics)


def ordering_summary(report: ComparisonReport) -> list:
    """Method names sorted by mean F-measure, best first."""
    return sorted(report.methods, key=lambda m: -report.mean_f_measure[m])


def mean_f(report: ComparisonReport, name) -> float:
    return report.mean_f_measure[name]


def pairwise_p(report: ComparisonReport, a, b):
    for p in report.pairwise:
        if {p.method_a, p.method_b} == {a, b}:
            return p.p_value
    return None


def f_matrix_column(report: ComparisonReport, name) -> np.ndarray:
    return report.f_measures[:, report.methods.index(name)]
