"""
Flat ``key = value`` run configuration.

Blank lines and ``#`` comments are ignored.  A repeated key collects its
values into a list, and so does a single line with whitespace-separated
values.  Values are read as ``int``, then ``float``, then left as text.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

EXPERIMENTS = ("identities", "bourgain", "decay", "project", "pipeline")


class ConfigError(ValueError):
    """Malformed configuration; ``line`` and ``key`` locate the problem when known."""

    def __init__(self, message: str, line: int = None, key: str = None):
        where = []
        if line is not None:
            where.append(f"line {line}")
        if key is not None:
            where.append(f"field {key!r}")
        super().__init__(f"{', '.join(where)}: {message}" if where else message)
        self.line = line
        self.key = key


def _scalar(text: str):
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            pass
    return text


def parse_config(text: str) -> dict:
    values: dict = {}
    for i, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError("expected 'key = value'", line=i)
        key, _, rhs = line.partition("=")
        key = key.strip()
        if not key.replace("_", "").isalnum():
            raise ConfigError("invalid key", line=i, key=key)
        items = [_scalar(t) for t in rhs.split()]
        if not items:
            raise ConfigError("missing value", line=i, key=key)
        values.setdefault(key, []).extend(items)
    return values


# default parameters per experiment; lists stay lists, scalars are unwrapped
DEFAULTS = {
    "identities": {"n": [1, 2], "functions": 100, "points": 1000, "band": 32.0,
                   "lam": 1000.0, "cone_functions": 50, "frames": 1000,
                   "widths": [0.5, 1.0, 2.0, 4.0, 8.0]},
    "bourgain": {"n": 1, "R": [], "eps": 0.01, "atoms_per_cell": 8,
                 "samples": 1000},
    "decay": {"measure": "tiny", "n": 1, "surface": ["paraboloid", "cone"],
              "R": [8.0, 16.0, 32.0, 64.0], "side": 1e-3},
    "project": {"n": [1, 2], "alpha": [0.5, 1.0, "n"], "cells": 8, "half_width": 0.9,
                "scale": 0.3},
    "pipeline": {"n": 1, "lam": 64.0, "alpha": 0.5, "atoms": 16, "cells": 8, "order": 3},
}
LIST_KEYS = {"n", "R", "widths", "surface", "alpha"}
RANDOMIZED = {"identities", "pipeline", "bourgain"}


@dataclass(frozen=True)
class RunConfig:
    experiment: str
    params: dict
    seed: int = None
    workers: int = 1
    out: str = "."
    source: str = None

    def resolved(self) -> dict:
        """Everything that determines the run (the output directory excluded)."""
        return {"experiment": self.experiment, "seed": self.seed, "workers": self.workers,
                **self.params}

    def get(self, key):
        return self.params[key]


def build_config(experiment: str, values: dict, seed=None, workers=None, out=None,
                 source=None) -> RunConfig:
    if experiment not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment {experiment!r}")
    values = {k: list(v) for k, v in values.items()}
    if "experiment" in values:
        named = values.pop("experiment")
        if named != [experiment]:
            raise ConfigError(f"config is for {named[0]!r}, not {experiment!r}", key="experiment")
    cfg_seed = values.pop("seed", None)
    cfg_workers = values.pop("workers", None)
    params = {}
    defaults = DEFAULTS[experiment]
    for key, v in values.items():
        if key not in defaults:
            raise ConfigError("unknown field", key=key)
        params[key] = v if key in LIST_KEYS else _single(key, v)
    for key, v in defaults.items():
        if key not in params:
            params[key] = list(v) if isinstance(v, list) else v
    if seed is None and cfg_seed is not None:
        seed = _single("seed", cfg_seed)
    if seed is not None and not isinstance(seed, int):
        raise ConfigError("seed must be an integer", key="seed")
    if workers is None:
        workers = _single("workers", cfg_workers) if cfg_workers else 1
    if not isinstance(workers, int) or workers < 1:
        raise ConfigError("workers must be a positive integer", key="workers")
    if experiment in RANDOMIZED and seed is None:
        raise ConfigError("a seed is required for randomized steps", key="seed")
    return RunConfig(experiment, params, seed, workers, out or ".", source)


def _single(key, v):
    if len(v) != 1:
        raise ConfigError("expected a single value", key=key)
    return v[0]


def load_config(path, experiment: str, **overrides) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    return build_config(experiment, parse_config(text), source=str(path), **overrides)
