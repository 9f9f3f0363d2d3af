"""Scenario configuration: strict TOML files, validated into typed specs."""
from __future__ import annotations

import re
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from ._validation import ValidationError, check_int
from .env import GaussianMean, LinearRegression, from_dict, to_dict
from .gaps import MCBudget
from .learn import (
    ConvexCombination,
    DatasetMean,
    FixedBias,
    LossSpec,
    Ridge,
    RidgeBiasClosedForm,
    check_compatible,
)


class ConfigError(ValidationError):
    pass


@dataclass(frozen=True)
class Estimators:
    k: int = 5
    mi_trials: int = 10_000
    mi_tuples: int = 4
    js_trials: int = 100_000
    mi_estimator: str = "ksg"

    def __post_init__(self):
        check_int("estimators.k", self.k)
        check_int("estimators.mi_trials", self.mi_trials, minimum=self.k + 1)
        check_int("estimators.mi_tuples", self.mi_tuples)
        check_int("estimators.js_trials", self.js_trials, minimum=2)
        if self.mi_estimator not in ("ksg", "gaussian"):
            raise ValidationError(f"estimators.mi_estimator must be 'ksg' or 'gaussian', got {self.mi_estimator!r}")


@dataclass(frozen=True)
class Sweep:
    parameter: str
    values: tuple

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))
        if len(self.values) < 1:
            raise ValidationError("sweep.values must not be empty")


# bare sweep names -> (section, key)
SWEEPABLE = {
    "nu_bar_sq": ("environment", "nu_bar_sq"),
    "nu_sq": ("environment", "nu_sq"),
    "mu_bar": ("environment", "mu_bar"),
    "c": ("loss", "c"),
    "lam": ("base", "lam"),
    "alpha": ("base", "alpha"),
    "N": ("sizes", "N"),
    "m": ("sizes", "m"),
}


@dataclass(frozen=True)
class ScenarioConfig:
    environment: object = field(default_factory=lambda: LinearRegression((2.0, 3.0), 0.5, 1.1))
    base: object = field(default_factory=lambda: Ridge(2.0))
    meta: object = field(default_factory=RidgeBiasClosedForm)
    loss: LossSpec = field(default_factory=lambda: LossSpec(1.5))
    N: int = 4
    m: int = 6
    budget: MCBudget = field(default_factory=MCBudget)
    estimators: Estimators = field(default_factory=Estimators)
    sweep: Sweep | None = None
    output_dir: str = "results"

    def __post_init__(self):
        check_int("sizes.N", self.N)
        check_int("sizes.m", self.m)
        check_compatible(self.environment, self.base, self.meta)

    def with_value(self, parameter: str, value: float) -> "ScenarioConfig":
        if parameter not in SWEEPABLE:
            raise ConfigError(f"sweep.parameter must be one of {', '.join(SWEEPABLE)}, got {parameter!r}")
        section, key = SWEEPABLE[parameter]
        if section == "environment":
            if not hasattr(self.environment, key):
                raise ConfigError(f"environment has no field {key!r}")
            return replace(self, environment=replace(self.environment, **{key: float(value)}))
        if section == "loss":
            return replace(self, loss=LossSpec(float(value)))
        if section == "base":
            if not hasattr(self.base, key):
                raise ConfigError(f"base-learner has no field {key!r}")
            return replace(self, base=replace(self.base, **{key: float(value)}))
        if float(value) != int(value):
            raise ConfigError(f"{parameter} must be an integer, got {value}")
        return replace(self, **{key: int(value)})

    def with_seed(self, seed: int) -> "ScenarioConfig":
        return replace(self, budget=replace(self.budget, seed=int(seed)))

    def sweep_value(self, parameter: str) -> float:
        section, key = SWEEPABLE[parameter]
        holder = {"environment": self.environment, "loss": self.loss, "base": self.base}.get(section, self)
        return float(getattr(holder, key))


SECTIONS = {
    "environment": None,
    "base": None,
    "meta": None,
    "loss": {"c"},
    "sizes": {"N", "m"},
    "budget": {"outer_trials", "inner_trials", "test_samples", "seed"},
    "estimators": set(Estimators.__dataclass_fields__),
    "sweep": {"parameter", "values"},
    "output": {"dir"},
}


def _locate(text: str, section: str, key: str | None = None) -> str:
    if not text:
        return ""
    lines = text.splitlines()
    in_section = False
    for i, line in enumerate(lines, 1):
        stripped = line.strip()
        if stripped.startswith("["):
            in_section = stripped == f"[{section}]"
            if in_section and key is None:
                return f" (line {i})"
        elif in_section and key is not None and re.match(rf"{re.escape(key)}\s*=", stripped):
            return f" (line {i})"
    return ""


def _base_from(d: dict):
    d = dict(d)
    kind = d.pop("kind", None)
    if kind == "ridge":
        cls = Ridge
    elif kind == "convex_combination":
        cls = ConvexCombination
    else:
        raise ValidationError(f"kind must be 'ridge' or 'convex_combination', got {kind!r}")
    unknown = set(d) - set(cls.__dataclass_fields__)
    if unknown:
        raise ValidationError(f"unknown key(s) {', '.join(sorted(unknown))}")
    return cls(**d)


def _meta_from(d: dict):
    d = dict(d)
    kind = d.pop("kind", None)
    classes = {"ridge_bias": RidgeBiasClosedForm, "dataset_mean": DatasetMean, "fixed": FixedBias}
    if kind not in classes:
        raise ValidationError(f"kind must be one of {', '.join(classes)}, got {kind!r}")
    cls = classes[kind]
    unknown = set(d) - set(cls.__dataclass_fields__)
    if unknown:
        raise ValidationError(f"unknown key(s) {', '.join(sorted(unknown))}")
    return cls(**d)


def config_from_dict(raw: dict, text: str = "") -> ScenarioConfig:
    unknown = set(raw) - set(SECTIONS)
    if unknown:
        name = sorted(unknown)[0]
        raise ConfigError(f"unknown section [{name}]{_locate(text, name)}")
    for name, keys in SECTIONS.items():
        sec = raw.get(name, {})
        if not isinstance(sec, dict):
            raise ConfigError(f"[{name}] must be a table")
        if keys is not None:
            for key in sec:
                if key not in keys:
                    raise ConfigError(f"unknown key {name}.{key}{_locate(text, name, key)}")

    def build(section, fn, default):
        if section not in raw:
            return default
        try:
            return fn(raw[section])
        except ConfigError:
            raise
        except (ValidationError, TypeError, ValueError) as exc:
            # point at the offending key when the message names one
            key = next((k for k in raw[section] if re.search(rf"\b{re.escape(k)}\b", str(exc))), None)
            where = _locate(text, section, key) if key else ""
            raise ConfigError(f"invalid [{section}]{where or _locate(text, section)}: {exc}") from None

    env = build("environment", from_dict, LinearRegression((2.0, 3.0), 0.5, 1.1))
    base = build("base", _base_from, Ridge(2.0) if isinstance(env, LinearRegression) else ConvexCombination(0.5))
    meta = build("meta", _meta_from, RidgeBiasClosedForm() if isinstance(base, Ridge) else DatasetMean())
    loss = build("loss", lambda d: LossSpec(**d), LossSpec(1.5))
    budget = build("budget", lambda d: MCBudget(**d), MCBudget())
    estimators = build("estimators", lambda d: Estimators(**d), Estimators())
    sweep = build("sweep", lambda d: Sweep(**d), None)
    sizes = raw.get("sizes", {})
    try:
        cfg = ScenarioConfig(env, base, meta, loss, sizes.get("N", 4), sizes.get("m", 6), budget, estimators,
                             sweep, str(raw.get("output", {}).get("dir", "results")))
    except ValidationError as exc:
        raise ConfigError(f"invalid configuration: {exc}") from None
    if sweep is not None:
        try:
            cfg.with_value(sweep.parameter, sweep.values[0])
        except (ValidationError, TypeError) as exc:
            raise ConfigError(f"invalid [sweep]{_locate(text, 'sweep')}: {exc}") from None
    return cfg


def load_config(path) -> ScenarioConfig:
    path = Path(path)
    text = path.read_text()
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    try:
        return config_from_dict(raw, text)
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def config_to_dict(cfg: ScenarioConfig) -> dict:
    """Plain-data form of a configuration (inverse of :func:`config_from_dict`)."""
    base = {"kind": "ridge", "lam": cfg.base.lam} if isinstance(cfg.base, Ridge) else {
        "kind": "convex_combination", "alpha": cfg.base.alpha}
    if isinstance(cfg.meta, FixedBias):
        meta = {"kind": "fixed", "u": list(cfg.meta.u)}
    else:
        meta = {"kind": "ridge_bias" if isinstance(cfg.meta, RidgeBiasClosedForm) else "dataset_mean"}
    out = {
        "environment": to_dict(cfg.environment),
        "base": base,
        "meta": meta,
        "loss": {"c": cfg.loss.c},
        "sizes": {"N": cfg.N, "m": cfg.m},
        "budget": {k: getattr(cfg.budget, k) for k in ("outer_trials", "inner_trials", "test_samples", "seed")},
        "estimators": {k: getattr(cfg.estimators, k) for k in Estimators.__dataclass_fields__},
        "output": {"dir": cfg.output_dir},
    }
    if cfg.sweep is not None:
        out["sweep"] = {"parameter": cfg.sweep.parameter, "values": list(cfg.sweep.values)}
    return out


def parse_values(spec: str) -> tuple:
    """``"a:b:n"`` -> n evenly spaced values from a to b; ``"v1,v2"`` -> explicit list."""
    try:
        if ":" in spec:
            a, b, n = spec.split(":")
            n = int(n)
            if n < 1:
                raise ValueError
            return tuple(float(v) for v in np.linspace(float(a), float(b), n))
        return tuple(float(v) for v in spec.split(","))
    except ValueError:
        raise ConfigError(f"--values must look like 'a:b:n' or 'v1,v2,...', got {spec!r}") from None


def is_mean_estimation(cfg: ScenarioConfig) -> bool:
    return isinstance(cfg.environment, GaussianMean)


def mean_estimation_defaults() -> ScenarioConfig:
    """Gaussian mean estimation with N=4, m=6, alpha=0.5 and the same loss truncation."""
    return ScenarioConfig(GaussianMean(0.0, 0.5, 1.1), ConvexCombination(0.5), DatasetMean(), LossSpec(1.5), 4, 6)
