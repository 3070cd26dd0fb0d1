"""Run configuration: defaults, key=value config files, flag overrides.

Precedence is command-line flags over config file over defaults.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, fields

from .errors import BadConfig

_ENUMS = {
    "representation": ("timeseries", "aggregation"),
    "weighting": ("gd", "none", "manual", "chi2", "infogain", "gini"),
    "mode": ("majority", "weighted"),
    "features": ("all", "dynamic_only", "static_only"),
}


@dataclass
class RunConfig:
    events: str = ""
    outcomes: str = ""
    output_dir: str = "."
    window_hours: int = 2
    horizon_hours: int = 48
    representation: str = "timeseries"
    weighting: str = "gd"
    features: str = "all"
    k: int = 10
    learning_rate: float = 0.3
    max_epochs: int = 200
    threshold: float = 0.5
    mode: str = "majority"
    folds: int = 20
    seed: int = 7
    workers: int = 0      # 0 = available cores

    def __post_init__(self):
        for name, allowed in _ENUMS.items():
            if getattr(self, name) not in allowed:
                raise BadConfig(f"{name} must be one of {allowed}")
        if self.window_hours <= 0 or self.horizon_hours <= 0:
            raise BadConfig("window and horizon must be positive")
        if self.horizon_hours % self.window_hours != 0:
            raise BadConfig("horizon_hours must be divisible by window_hours")
        if not (0.0 < self.threshold < 1.0):
            raise BadConfig("threshold must lie in (0, 1)")
        if self.k < 1 or self.folds < 2:
            raise BadConfig("k must be >= 1 and folds >= 2")

    def effective_workers(self) -> int:
        if self.workers and self.workers > 0:
            return self.workers
        return os.cpu_count() or 1


_FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _coerce(name, raw):
    kind = _FIELD_TYPES[name]
    if kind == "int":
        return int(raw)
    if kind == "float":
        return float(raw)
    return str(raw)


def read_config_values(path) -> dict:
    """Parse a key=value config file into typed values."""
    values = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise BadConfig(f"line {line_no} of {path} is not key=value")
            key, value = (part.strip() for part in line.split("=", 1))
            if key not in _FIELD_TYPES:
                raise BadConfig(f"unknown config key {key!r}")
            try:
                values[key] = _coerce(key, value)
            except ValueError:
                raise BadConfig(f"bad value for {key!r}: {value!r}") from None
    return values


def write_config(config: RunConfig, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for f in fields(RunConfig):
            fh.write(f"{f.name}={getattr(config, f.name)}\n")


def build_config(file_path=None, overrides=None) -> RunConfig:
    """Merge defaults, an optional config file, and explicit overrides."""
    values = {}
    if file_path:
        values.update(read_config_values(file_path))
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if key not in _FIELD_TYPES:
            raise BadConfig(f"unknown config key {key!r}")
        values[key] = value
    return RunConfig(**values)
