"""Experiment configuration: flat ``key = value`` lines grouped under ``[section]`` headers.

Lines before the first header belong to the ``general`` section.  ``#`` starts
a comment.  Validation collects every problem with its line number and
returns nothing until the whole file is clean, so a config is either applied
in full or not at all.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Callable

EXPERIMENTS = ("gradcheck", "bounds-sweep", "indicator", "planted-train", "schedule", "lower-bound", "corollary")

# experiments whose construction needs one first-layer neuron per box face
NEEDS_INDICATOR = {"indicator", "planted-train", "schedule", "corollary"}


class ConfigError(ValueError):
    def __init__(self, errors: list[str]):
        super().__init__("invalid config:\n  " + "\n  ".join(errors))
        self.errors = errors


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise ValueError("must be a positive integer")
    return value


def _nonneg_int(text: str) -> int:
    value = int(text)
    if value < 0:
        raise ValueError("must be a non-negative integer")
    return value


def _finite(text: str) -> float:
    value = float(text)
    if not math.isfinite(value):
        raise ValueError("must be finite")
    return value


def _positive(text: str) -> float:
    value = _finite(text)
    if value <= 0:
        raise ValueError("must be positive")
    return value


def _step_rule(text: str) -> str | float:
    if text in ("lemma6", "empirical"):
        return text
    try:
        return _positive(text)
    except ValueError:
        raise ValueError("must be 'lemma6', 'empirical' or a positive number") from None


def _choice(*options: str) -> Callable[[str], str]:
    def parse(text: str) -> str:
        if text not in options:
            raise ValueError(f"must be one of {', '.join(options)}")
        return text

    return parse


SCHEMA: dict[str, dict[str, Callable[[str], Any]]] = {
    "general": {"experiment": _choice(*EXPERIMENTS)},
    "architecture": {"d": _positive_int, "k0": _positive_int, "L": _positive_int, "kn": _positive_int},
    "data": {
        "generator": _choice("grid", "adversarial", "file"),
        "file": str,
        "n": _positive_int,
    },
    "run": {
        "seed": _nonneg_int,
        "lambda": _step_rule,
        "steps": _nonneg_int,
        "replications": _positive_int,
        "trials": _positive_int,
        "pairs": _positive_int,
        "rectangles": _positive_int,
        "probes": _positive_int,
        "perturbations": _positive_int,
        "saturation": _positive,
        "estimator": _choice("conditional-mean", "zero", "network"),
        "kappa": _positive,
        "rtol": _positive,
        "atol": _positive,
        "binomial_max": _positive_int,
        "time_limit": _positive,
    },
    "output": {"dir": str},
    "expect": {},  # free-form: metric name = expected number
}

DEFAULTS: dict[str, Any] = {
    "d": 1, "k0": 2, "L": 2, "kn": None,
    "generator": "grid", "file": None, "n": 10,
    "seed": 0, "lambda": "lemma6", "steps": 300, "replications": 1000, "trials": 1000,
    "pairs": 500, "rectangles": 50, "probes": 10_000, "perturbations": 1000, "saturation": None,
    "estimator": "conditional-mean", "kappa": 1e-3, "rtol": 1e-6, "atol": 1e-10,
    "binomial_max": 1000, "time_limit": None, "dir": "out",
}

# per-experiment overrides of the generic defaults
EXPERIMENT_DEFAULTS: dict[str, dict[str, Any]] = {
    "gradcheck": {"trials": 100, "d": 3, "k0": 4, "L": 4, "kn": 8, "time_limit": 30.0},
    "bounds-sweep": {"trials": 1000, "pairs": 500},
    "indicator": {"d": 2, "k0": 4, "L": 3, "saturation": 5.0},
    "planted-train": {"time_limit": 60.0},
    "schedule": {},
    "lower-bound": {"time_limit": 120.0},
    "corollary": {"estimator": "network", "lambda": "empirical", "steps": 200},
}


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    d: int
    k0: int
    L: int
    kn: int | None
    generator: str
    file: Path | None
    n: int
    seed: int
    step_rule: str | float
    steps: int
    replications: int
    trials: int
    pairs: int
    rectangles: int
    probes: int
    perturbations: int
    saturation: float | None
    estimator: str
    kappa: float
    rtol: float
    atol: float
    binomial_max: int
    time_limit: float | None
    out_dir: Path
    expect: dict[str, float] = field(default_factory=dict)
    source: Path | None = None
    echo: tuple[str, ...] = ()

    def with_overrides(self, *, seed: int | None = None, out_dir: str | Path | None = None) -> "ExperimentConfig":
        changes: dict[str, Any] = {}
        if seed is not None:
            changes["seed"] = seed
        if out_dir is not None:
            changes["out_dir"] = Path(out_dir)
        return replace(self, **changes)


def parse_text(text: str, origin: str = "<config>") -> tuple[dict[str, tuple[str, int]], dict[str, tuple[str, int]]]:
    """Split a config into ``{key: (raw value, line)}`` for settings and expectations."""
    errors: list[str] = []
    values: dict[str, tuple[str, int]] = {}
    expect: dict[str, tuple[str, int]] = {}
    section = "general"
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        where = f"{origin}:{lineno}"
        if line.startswith("["):
            if not line.endswith("]"):
                errors.append(f"{where}: malformed section header {raw.strip()!r}")
                continue
            section = line[1:-1].strip()
            if section not in SCHEMA:
                errors.append(f"{where}: unknown section [{section}]")
            continue
        if "=" not in line:
            errors.append(f"{where}: expected 'key = value', got {raw.strip()!r}")
            continue
        key, value = (part.strip() for part in line.split("=", 1))
        if not key or not value:
            errors.append(f"{where}: empty key or value")
            continue
        if section not in SCHEMA:
            continue
        if section == "expect":
            if key in expect:
                errors.append(f"{where}: duplicate expectation {key!r}")
            expect[key] = (value, lineno)
            continue
        if key not in SCHEMA[section]:
            errors.append(f"{where}: unknown key {key!r} in [{section}]")
            continue
        if key in values:
            errors.append(f"{where}: duplicate key {key!r} (first set on line {values[key][1]})")
            continue
        values[key] = (value, lineno)
    if errors:
        raise ConfigError(errors)
    return values, expect


def _parsers() -> dict[str, Callable[[str], Any]]:
    return {k: p for section in SCHEMA.values() for k, p in section.items()}


def _typed(values: dict[str, tuple[str, int]], expect: dict[str, tuple[str, int]], origin: str):
    errors = []
    parsers = _parsers()
    typed: dict[str, Any] = {}
    for key, (raw, lineno) in values.items():
        try:
            typed[key] = parsers[key](raw)
        except ValueError as exc:
            errors.append(f"{origin}:{lineno}: {key} = {raw!r}: {exc}")
    expectations: dict[str, float] = {}
    for key, (raw, lineno) in expect.items():
        try:
            expectations[key] = float(raw)
        except ValueError:
            errors.append(f"{origin}:{lineno}: expectation {key} = {raw!r} is not a number")
    return typed, expectations, errors


def build_config(typed: dict[str, Any], expect: dict[str, float], source: Path | None = None,
                 lines: dict[str, int] | None = None) -> ExperimentConfig:
    """Merge parsed values over the defaults and check cross-field constraints."""
    lines = lines or {}
    origin = str(source) if source else "<config>"

    def at(key: str) -> str:
        return f"{origin}:{lines[key]}" if key in lines else origin

    errors = []
    name = typed.get("experiment")
    if name is None:
        raise ConfigError([f"{origin}: no experiment given (set 'experiment = ...' or pass --experiment)"])
    merged = {**DEFAULTS, **EXPERIMENT_DEFAULTS[name], **typed}

    if name in NEEDS_INDICATOR and merged["k0"] < 2 * merged["d"]:
        errors.append(f"{at('k0')}: experiment {name} requires k0 >= 2d, got k0={merged['k0']}, d={merged['d']}")
    if merged["L"] < 2:
        errors.append(f"{at('L')}: networks need L >= 2")
    if merged["generator"] == "file":
        if merged["file"] is None:
            errors.append(f"{at('generator')}: generator = file needs a 'file' entry in [data]")
        else:
            path = Path(merged["file"])
            if source is not None and not path.is_absolute():
                path = source.parent / path
            if not path.is_file():
                errors.append(f"{at('file')}: data file {str(path)!r} does not exist")
            merged["file"] = path
    elif merged["file"] is not None:
        errors.append(f"{at('file')}: 'file' is only used with generator = file")
    if name == "planted-train" and merged["kn"] is not None and merged["generator"] != "file" and merged["kn"] < merged["n"]:
        errors.append(f"{at('kn')}: planted initialization needs kn >= n ({merged['kn']} < {merged['n']})")
    if errors:
        raise ConfigError(errors)

    out = Path(merged["dir"])
    if source is not None and not out.is_absolute() and "dir" in typed:
        out = source.parent / out
    cfg = ExperimentConfig(
        experiment=name,
        d=merged["d"], k0=merged["k0"], L=merged["L"], kn=merged["kn"],
        generator=merged["generator"], file=merged["file"], n=merged["n"],
        seed=merged["seed"], step_rule=merged["lambda"], steps=merged["steps"],
        replications=merged["replications"], trials=merged["trials"], pairs=merged["pairs"],
        rectangles=merged["rectangles"], probes=merged["probes"], perturbations=merged["perturbations"],
        saturation=merged["saturation"], estimator=merged["estimator"], kappa=merged["kappa"],
        rtol=merged["rtol"], atol=merged["atol"], binomial_max=merged["binomial_max"],
        time_limit=merged["time_limit"], out_dir=out, expect=dict(expect), source=source,
        echo=tuple(f"{k} = {typed[k]}" for k in sorted(typed)),
    )
    return cfg


def validate_text(text: str, source: Path | None = None, experiment: str | None = None) -> ExperimentConfig:
    origin = str(source) if source else "<config>"
    values, expect = parse_text(text, origin)
    typed, expectations, errors = _typed(values, expect, origin)
    if experiment is not None:
        typed["experiment"] = experiment
    if errors:
        raise ConfigError(errors)
    return build_config(typed, expectations, source, {k: v[1] for k, v in values.items()})


def validate_config(path: str | Path, experiment: str | None = None) -> ExperimentConfig:
    """Parse and fully validate a config file; raise ConfigError listing every problem."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError([f"{path}: cannot read config ({exc.strerror})"]) from None
    return validate_text(text, path, experiment)


def default_config(experiment: str) -> ExperimentConfig:
    if experiment not in EXPERIMENTS:
        raise ConfigError([f"unknown experiment {experiment!r}; choose from {', '.join(EXPERIMENTS)}"])
    return build_config({"experiment": experiment}, {})
