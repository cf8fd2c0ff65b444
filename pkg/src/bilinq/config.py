"""Experiment configuration: YAML file schema, validation, and built-in examples.

A config file looks like::

    plant:
      example: hydraulic          # or inline A, B, D (D as a list of n matrices)
      overrides: {"A[0,0]": 0.5}  # optional single-entry edits
    cost:
      Lambda: [[1, 0], [0, 1]]    # or diag: [1, 1]
      gamma: 0.9
    signal: {kind: PRBS, amplitude: 1.0, seed: 0}
    iteration: {epsilon: 1.0e-10, max_iterations: 10000}
    horizon: 2000
    x0: [1, 1, 1]
    mode: both
    flags: {continue_accumulation: false, best_effort_on_nonconvergence: false}
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import yaml

from .core import BilinearSystem, CostSpec, lifted_dim
from .errors import BilinqError, ConfigError
from .excitation import PE_TOLERANCE, SignalKind, SignalSpec, default_signal
from .policy import IterationConfig
from .registry import EXAMPLE_DEFAULTS, example_names, example_system

MODES = ("model_free", "model_based", "both")
_OVERRIDE_KEY = re.compile(r"^\s*(A|B|D)\s*\[\s*(\d+)\s*(?:,\s*(\d+)\s*)?(?:,\s*(\d+)\s*)?\]\s*$")


@dataclass(frozen=True)
class PlantSpec:
    example: str | None = None
    A: tuple | None = None
    B: tuple | None = None
    D: tuple | None = None
    overrides: tuple = ()

    def build(self) -> BilinearSystem:
        if self.example is not None:
            base = example_system(self.example)
            A, B, D = base.A.copy(), base.B.copy(), base.D.copy()
        else:
            A = B = D = None
        if self.A is not None:
            A = np.array(self.A, dtype=float)
        if self.B is not None:
            B = np.array(self.B, dtype=float)
        if self.D is not None:
            D = np.array(self.D, dtype=float)
        if A is None or B is None:
            raise ConfigError("plant needs an example name or inline A and B")
        A = np.atleast_2d(A)
        B = B.reshape(A.shape[0], -1)
        if D is None:
            D = np.zeros((A.shape[0], A.shape[0], B.shape[1]))
        else:
            D = D.reshape(A.shape[0], A.shape[0], B.shape[1])
        mats = {"A": A, "B": B, "D": D}
        for key, value in self.overrides:
            match = _OVERRIDE_KEY.match(key)
            if not match:
                raise ConfigError(f"bad override key {key!r}; use e.g. 'A[0,0]' or 'D[1,2,0]'")
            name = match.group(1)
            idx = tuple(int(g) for g in match.groups()[1:] if g is not None)
            try:
                mats[name][idx] = float(value)
            except (IndexError, ValueError) as exc:
                raise ConfigError(f"override {key!r}: {exc}") from exc
        try:
            return BilinearSystem(**mats)
        except BilinqError as exc:
            raise ConfigError(f"invalid plant: {exc}") from exc


@dataclass(frozen=True)
class ExperimentConfig:
    plant: PlantSpec
    cost: CostSpec
    signal: SignalSpec
    x0: tuple
    iteration: IterationConfig = IterationConfig()
    horizon: int = 2000
    mode: str = "model_free"
    out_dir: str | None = None
    continue_accumulation: bool = False
    best_effort_on_nonconvergence: bool = False
    pe_tolerance: float = PE_TOLERANCE
    independence_tolerance: float = math.sqrt(PE_TOLERANCE)
    max_retries: int = 32
    stop_norm: float = 1e-12
    extra: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        n = len(self.x0)
        if self.cost.n != n:
            raise ConfigError(f"x0 has length {n} but the cost partitions n = {self.cost.n}")
        if self.signal.channels != self.cost.m:
            raise ConfigError(f"signal has {self.signal.channels} channels, cost expects m = {self.cost.m}")
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}")
        if self.horizon <= self.N:
            raise ConfigError(f"horizon {self.horizon} must exceed N = {self.N}")
        if self.signal.kind is SignalKind.SUM_OF_SINUSOIDS:
            need = math.ceil(self.N / 2)
            if self.signal.distinct_frequencies() < need:
                raise ConfigError(f"SumOfSinusoids needs at least {need} distinct frequencies for N = {self.N}")

    @property
    def n(self) -> int:
        return self.cost.n

    @property
    def m(self) -> int:
        return self.cost.m

    @property
    def N(self) -> int:
        return lifted_dim(self.n, self.m)

    def with_seed(self, seed: int) -> "ExperimentConfig":
        signal = self.signal
        if signal.kind is SignalKind.SUM_OF_SINUSOIDS and self.extra.get("default_sinusoids", False):
            signal = default_signal(signal.kind, signal.channels, self.N, seed, signal.amplitude)
        return replace(self, signal=replace(signal, seed=seed))

    def to_dict(self) -> dict:
        p = self.plant
        plant = {"example": p.example} if p.example else {}
        for name in ("A", "B", "D"):
            if getattr(p, name) is not None:
                plant[name] = np.asarray(getattr(p, name)).tolist()
        if p.overrides:
            plant["overrides"] = dict(p.overrides)
        s = self.signal
        signal = {"kind": s.kind.value, "amplitude": list(s.amplitude) if isinstance(s.amplitude, tuple) else s.amplitude,
                  "seed": s.seed}
        if s.kind is SignalKind.GBN:
            signal["switch_probability"] = s.switch_probability
        if s.kind is SignalKind.SUM_OF_SINUSOIDS:
            signal["sinusoids"] = [list(t) for t in s.sinusoids]
        if s.kind is SignalKind.FILTERED_WHITE_NOISE:
            signal["numerator"] = list(s.numerator)
            signal["denominator"] = list(s.denominator)
        return {
            "plant": plant,
            "cost": {"Lambda": self.cost.Lambda.tolist(), "gamma": self.cost.gamma},
            "signal": signal,
            "iteration": {"epsilon": self.iteration.epsilon, "max_iterations": self.iteration.max_iterations,
                          "stall_window": self.iteration.stall_window},
            "horizon": self.horizon,
            "x0": list(self.x0),
            "mode": self.mode,
            "out": self.out_dir,
            "pe_tolerance": self.pe_tolerance,
            "independence_tolerance": self.independence_tolerance,
            "max_retries": self.max_retries,
            "stop_norm": self.stop_norm,
            "flags": {
                "continue_accumulation": self.continue_accumulation,
                "best_effort_on_nonconvergence": self.best_effort_on_nonconvergence,
            },
        }

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=False, default_flow_style=None)


def _float(value, what):
    try:
        return float(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{what} must be a number, got {value!r}") from None


def _lambda_from(cost: dict) -> np.ndarray:
    if "Lambda" in cost:
        return np.array(cost["Lambda"], dtype=float)
    if "diag" in cost:
        return np.diag(np.array(cost["diag"], dtype=float))
    raise ConfigError("cost needs Lambda or diag")


def config_from_dict(raw: dict, seed: int | None = None) -> ExperimentConfig:
    """Build and validate a config. Missing fields fall back to the named example's defaults."""
    if not isinstance(raw, dict):
        raise ConfigError("config must be a mapping")
    try:
        plant_raw = dict(raw.get("plant") or {})
        example = plant_raw.get("example")
        if example is not None and example not in example_names():
            raise ConfigError(f"unknown example {example!r}; choose from {example_names()}")
        defaults = EXAMPLE_DEFAULTS.get(example, {})
        overrides = plant_raw.get("overrides") or {}
        plant = PlantSpec(
            example=example,
            A=plant_raw.get("A"), B=plant_raw.get("B"), D=plant_raw.get("D"),
            overrides=tuple((str(k), v) for k, v in overrides.items()),
        )
        system = plant.build()
        n, m = system.n, system.m

        cost_raw = dict(raw.get("cost") or {})
        if "Lambda" not in cost_raw and "diag" not in cost_raw:
            if "Lambda" not in defaults:
                raise ConfigError("cost.Lambda is required for inline plants")
            cost_raw["Lambda"] = defaults["Lambda"]
        gamma = _float(cost_raw.get("gamma", defaults.get("gamma", 0.9)), "cost.gamma")
        cost = CostSpec(_lambda_from(cost_raw), gamma, n)

        N = lifted_dim(n, m)
        sig_raw = dict(raw.get("signal") or {})
        for key, value in defaults.get("signal", {}).items():
            sig_raw.setdefault(key, value)
        kind = SignalKind(sig_raw.pop("kind", "PRBS"))
        sig_seed = int(seed if seed is not None else sig_raw.pop("seed", raw.get("seed", 0)))
        sig_raw.pop("seed", None)
        amplitude = sig_raw.pop("amplitude", 1.0)
        amplitude = [float(a) for a in amplitude] if isinstance(amplitude, list) else _float(amplitude, "amplitude")
        if "switch_probability" in sig_raw:
            sig_raw["switch_probability"] = _float(sig_raw["switch_probability"], "switch_probability")
        for key in ("numerator", "denominator"):
            if key in sig_raw:
                sig_raw[key] = tuple(_float(v, key) for v in sig_raw[key])
        auto_sines = kind is SignalKind.SUM_OF_SINUSOIDS and "sinusoids" not in sig_raw
        if "sinusoids" in sig_raw:
            sig_raw["sinusoids"] = tuple(tuple(_float(v, "sinusoid") for v in trip) for trip in sig_raw["sinusoids"])
        signal = default_signal(kind, m, N, sig_seed, amplitude, **sig_raw)

        it_raw = raw.get("iteration") or {}
        iteration = IterationConfig(
            epsilon=_float(it_raw.get("epsilon", 1e-10), "iteration.epsilon"),
            max_iterations=int(it_raw.get("max_iterations", 10000)),
            stall_window=int(it_raw.get("stall_window", 500)),
        )
        flags = raw.get("flags") or {}
        x0 = raw.get("x0", defaults.get("x0"))
        if x0 is None:
            raise ConfigError("x0 is required")
        x0 = tuple(_float(v, "x0") for v in np.ravel(x0))
        if len(x0) != n:
            raise ConfigError(f"x0 has length {len(x0)}, plant has n = {n}")
        return ExperimentConfig(
            plant=plant,
            cost=cost,
            signal=signal,
            x0=x0,
            iteration=iteration,
            horizon=int(raw.get("horizon", 2000)),
            mode=str(raw.get("mode", "model_free")),
            out_dir=raw.get("out"),
            continue_accumulation=bool(flags.get("continue_accumulation", False)),
            best_effort_on_nonconvergence=bool(
                flags.get("best_effort_on_nonconvergence", defaults.get("best_effort_on_nonconvergence", False))
            ),
            pe_tolerance=_float(raw.get("pe_tolerance", PE_TOLERANCE), "pe_tolerance"),
            independence_tolerance=_float(
                raw.get("independence_tolerance", math.sqrt(PE_TOLERANCE)), "independence_tolerance"
            ),
            max_retries=int(raw.get("max_retries", 32)),
            stop_norm=_float(raw.get("stop_norm", 1e-12), "stop_norm"),
            extra={"default_sinusoids": auto_sines},
        )
    except ConfigError:
        raise
    except (BilinqError, ValueError, TypeError, KeyError) as exc:
        raise ConfigError(f"invalid config: {exc}") from exc


def load_config(path, seed: int | None = None) -> ExperimentConfig:
    try:
        raw = yaml.safe_load(Path(path).read_text())
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return config_from_dict(raw or {}, seed=seed)


def example_registry(name: str, seed: int | None = None, **overrides) -> tuple[BilinearSystem, ExperimentConfig]:
    """Plant and default experiment config for a built-in example."""
    if name not in example_names():
        raise ConfigError(f"unknown example {name!r}; choose from {example_names()}")
    raw = {"plant": {"example": name}}
    raw.update(overrides)
    config = config_from_dict(raw, seed=seed)
    return config.plant.build(), config
