"""Synthetic cohort generation for desk-scale verification.

Two profiles:

* "planted": the informative dynamic variables split into two kinds.
  "Level" variables shift their whole trajectory for positives, so any
  per-variable summary statistic sees them. "Shape" variables carry a
  strong mean-zero drift for positives (down early, up late) plus only a
  faint level shift, so per-variable summaries barely notice them while
  the bucket-wise trajectory separates the classes sharply. Age gets a
  mild positive shift; everything else is label-independent noise.
* "trend": both classes carry a transient bump on the informative
  variables, positives early and negatives late. The bump returns to
  baseline, so per-variable value distributions (and with them min, max,
  median, first, last, count) are class-matched; only the temporal
  position separates the classes. Statics carry no signal.

Cells are dropped uniformly at the configured missing rate. The manifest
records the informative variables (by kind), each patient's latent risk,
and the generator's own dropped-cell counter, which is the ground truth
for sparsity checks.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import vocab
from .errors import BadSpec
from .ingest import Event, Outcome, build_cohort
from .streams import substream

PROFILES = ("planted", "trend")

N_BUCKETS = 24
BUCKET_MINUTES = 120

# signal strengths in units of the per-variable noise scale
LEVEL_SHIFT = 1.2         # level variables: whole-trajectory shift for positives
SHAPE_DRIFT = 3.2         # shape variables: peak-to-peak mean-zero drift
SHAPE_SHIFT = 0.5         # faint level component keeping shape variables
                          # detectable (but undervalued) by summary filters
AGE_SHIFT_YEARS = 12.0
WEIGHT_SHIFT_KG = 11.0
HEIGHT_SHIFT_CM = 4.0
MALE_RATE = {0: 0.48, 1: 0.64}
TREND_BUMP = 2.4          # trend profile: bump amplitude


@dataclass
class SynthSpec:
    n_patients: int = 1000
    prevalence: float = 0.18
    n_informative_variables: int = 2
    missing_rate: float = 0.28
    effect_size: float = 1.0
    seed: int = 7
    profile: str = "planted"

    def __post_init__(self):
        if self.n_patients < 1:
            raise BadSpec("n_patients must be positive")
        if not (0.0 < self.prevalence < 1.0):
            raise BadSpec("prevalence must lie in (0, 1)")
        if not (0.0 <= self.missing_rate < 1.0):
            raise BadSpec("missing_rate must lie in [0, 1)")
        if not (1 <= self.n_informative_variables <= vocab.N_DYNAMIC):
            raise BadSpec("n_informative_variables must be between 1 and 36")
        if not np.isfinite(self.effect_size) or self.effect_size < 0:
            raise BadSpec("effect_size must be a non-negative finite real")
        if self.profile not in PROFILES:
            raise BadSpec(f"unknown profile {self.profile!r}")


@dataclass
class SynthResult:
    events: list
    outcomes: list
    manifest: dict

    def cohort(self):
        return build_cohort(self.events, self.outcomes)


def _static_events(pid, rng, label, spec):
    # trend profile keeps statics label-free so only temporal shape separates
    informative = spec.profile != "trend"
    shift = spec.effect_size * label if informative else 0.0
    age = 62.0 + AGE_SHIFT_YEARS * shift + 10.0 * rng.standard_normal()
    male_rate = MALE_RATE[label] if informative else 0.5
    gender = float(rng.random() < male_rate)
    height = 170.0 + HEIGHT_SHIFT_CM * shift + 10.0 * rng.standard_normal()
    weight = 80.0 + WEIGHT_SHIFT_KG * shift + 14.0 * rng.standard_normal()
    return [
        Event(pid, 0, "Age", round(max(age, 16.0), 1)),
        Event(pid, 0, "Gender", gender),
        Event(pid, 0, "Height", round(max(height, 120.0), 1)),
        Event(pid, 0, "Weight", round(max(weight, 30.0), 1)),
    ]


def _signal_curves(spec, informative):
    """Per informative variable, the (level, curve) signal components.

    Returns {variable_index: (level_coefficient, per-bucket curve)} for the
    positive class; the curve is multiplied by the patient's latent risk.
    """
    t = np.arange(N_BUCKETS)
    drift = (t / (N_BUCKETS - 1)) - 0.5                   # mean-zero ramp
    curves = {}
    shape_vars = informative[1::2]                        # alternate: level, shape, ...
    for v in informative:
        if v in shape_vars:
            curves[v] = (SHAPE_SHIFT, SHAPE_DRIFT * drift)
        else:
            curves[v] = (LEVEL_SHIFT, np.zeros(N_BUCKETS))
    return curves, [v for v in informative if v not in shape_vars], list(shape_vars)


def generate(spec: SynthSpec) -> SynthResult:
    """Generate events, outcomes and a ground-truth manifest."""
    rng = substream(spec.seed, "synth")
    n = spec.n_patients
    width = len(str(max(n - 1, 1)))
    pids = [f"p{idx:0{width}d}" for idx in range(n)]

    labels = (rng.random(n) < spec.prevalence).astype(int)
    informative = np.sort(rng.choice(vocab.N_DYNAMIC, size=spec.n_informative_variables,
                                     replace=False))
    baselines = rng.uniform(40.0, 160.0, size=vocab.N_DYNAMIC)
    scales = 0.05 * baselines

    if spec.profile == "planted":
        risk = labels * spec.effect_size * rng.uniform(0.75, 1.25, size=n)
        curves, level_vars, shape_vars = _signal_curves(spec, informative)
    else:
        risk = spec.effect_size * rng.uniform(0.75, 1.25, size=n)
        level_vars, shape_vars = [], [int(v) for v in informative]
        centers = {0: 6.0, 1: 18.0}                        # bump at 12 h vs 36 h
        t = np.arange(N_BUCKETS)
        curves = {
            v: (0.0, None) for v in informative
        }
        bump = {y: TREND_BUMP * np.exp(-((t - c) / 3.0) ** 2) for y, c in centers.items()}

    events = []
    outcomes = []
    total_cells = 0
    dropped_cells = 0
    for i, pid in enumerate(pids):
        y = int(labels[i])
        outcomes.append(Outcome(pid, y))
        events.extend(_static_events(pid, rng, y, spec))
        offsets = 0.5 * rng.standard_normal(vocab.N_DYNAMIC)
        keep = rng.random((vocab.N_DYNAMIC, N_BUCKETS)) >= spec.missing_rate
        total_cells += keep.size
        dropped_cells += int(keep.size - keep.sum())
        n_obs = rng.integers(1, 3, size=(vocab.N_DYNAMIC, N_BUCKETS))
        minute_noise = rng.integers(0, BUCKET_MINUTES, size=(vocab.N_DYNAMIC, N_BUCKETS, 2))
        value_noise = rng.standard_normal((vocab.N_DYNAMIC, N_BUCKETS, 2))
        for v in range(vocab.N_DYNAMIC):
            signal = np.zeros(N_BUCKETS)
            if v in curves:
                if spec.profile == "planted":
                    level, curve = curves[v]
                    signal = risk[i] * (level + curve)
                else:
                    signal = risk[i] * bump[y]
            level_value = baselines[v] + scales[v] * offsets[v]
            cell_values = level_value + scales[v] * (signal + 0.6 * value_noise[v, :, 0])
            for t_idx in range(N_BUCKETS):
                if not keep[v, t_idx]:
                    continue
                base_minute = t_idx * BUCKET_MINUTES
                for j in range(int(n_obs[v, t_idx])):
                    minute = base_minute + int(minute_noise[v, t_idx, j])
                    value = cell_values[t_idx] + scales[v] * 0.1 * value_noise[v, t_idx, 1] * j
                    events.append(Event(pid, minute, vocab.DYNAMIC_VARIABLES[v],
                                        round(float(value), 4)))
    manifest = {
        "profile": spec.profile,
        "seed": spec.seed,
        "n_patients": n,
        "prevalence_requested": spec.prevalence,
        "prevalence_actual": float(labels.mean()),
        "effect_size": spec.effect_size,
        "missing_rate": spec.missing_rate,
        "informative_variables": [vocab.DYNAMIC_VARIABLES[v] for v in informative],
        "level_variables": [vocab.DYNAMIC_VARIABLES[v] for v in level_vars],
        "shape_variables": [vocab.DYNAMIC_VARIABLES[v] for v in shape_vars],
        "latent_risk": {pid: float(risk[i]) for i, pid in enumerate(pids)},
        "labels": {pid: int(labels[i]) for i, pid in enumerate(pids)},
        "total_cells": total_cells,
        "dropped_cells": dropped_cells,
    }
    events.sort(key=lambda e: (e.patient_id, e.minute, e.variable))
    return SynthResult(events=events, outcomes=outcomes, manifest=manifest)
