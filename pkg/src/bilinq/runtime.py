"""Online learning loop and the model-based comparison run.

:func:`run_online` only ever talks to the plant through ``oracle.step``.
"""
from __future__ import annotations

import csv
import json
import logging
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .config import ExperimentConfig
from .core import (
    BilinearSystem,
    LiftedSample,
    PlantOracle,
    SystemOracle,
    lift,
    ltv_matrix,
    spectral_radius,
    stage_cost,
)
from .data import DataMatrices
from .errors import NonConvergenceError, NumericalError
from .excitation import count_independent, generate
from .policy import (
    SolveReport,
    frozen_closed_loop,
    model_based_provider,
    model_free_provider,
    solve_frozen,
    transversality_check,
)

log = logging.getLogger(__name__)

CSV_SCHEMA_VERSION = 1
_GOLDEN = 0x9E3779B97F4A7C15


@dataclass
class StepRecord:
    t: int
    x: np.ndarray
    u: np.ndarray
    stage_cost: float
    discounted_cost: float
    phase: str
    retries: int = 0
    K: np.ndarray | None = None
    iterations: int | None = None
    residual: float | None = None
    converged: bool | None = None
    spectral_radius: float | None = None
    transversality: bool | None = None


@dataclass
class RunLog:
    mode: str
    n: int
    m: int
    records: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)
    data: DataMatrices | None = None

    @property
    def states(self) -> np.ndarray:
        return np.array([r.x for r in self.records])

    @property
    def total_cost(self) -> float:
        return self.records[-1].discounted_cost if self.records else 0.0

    def learning_records(self):
        return [r for r in self.records if r.phase == "learn"]

    def header(self) -> list[str]:
        cols = ["t", "phase"]
        cols += [f"x{i}" for i in range(self.n)]
        cols += [f"u{j}" for j in range(self.m)]
        cols += ["stage_cost", "discounted_cost", "retries"]
        cols += [f"K{j}_{i}" for j in range(self.m) for i in range(self.n)]
        cols += ["iterations", "residual", "converged", "spectral_radius", "transversality"]
        return cols

    def rows(self):
        def f(v):
            return "" if v is None else repr(float(v))

        def b(v):
            return "" if v is None else str(int(bool(v)))

        for r in self.records:
            row = [str(r.t), r.phase]
            row += [repr(float(v)) for v in r.x]
            row += [repr(float(v)) for v in r.u]
            row += [f(r.stage_cost), f(r.discounted_cost), str(r.retries)]
            row += [repr(float(v)) for v in r.K.ravel()] if r.K is not None else [""] * (self.n * self.m)
            row += ["" if r.iterations is None else str(r.iterations), f(r.residual), b(r.converged),
                    f(r.spectral_radius), b(r.transversality)]
            yield row

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write(f"# bilinq run log v{CSV_SCHEMA_VERSION} mode={self.mode}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(self.header())
            w.writerows(self.rows())

    def write_summary(self, path, config: ExperimentConfig | None = None) -> None:
        out = dict(self.summary)
        if config is not None:
            out["config"] = config.to_dict()
        Path(path).write_text(json.dumps(out, indent=2, sort_keys=True) + "\n")


def _retry_seed(seed: int, attempt: int) -> int:
    return (seed + attempt * _GOLDEN) % 2**64


def _new_direction_strength(accepted: list, xi) -> float:
    """Relative size of the singular value a candidate adds (row-normalized, as count_independent)."""
    S = np.column_stack(accepted + [xi])
    norms = np.linalg.norm(S, axis=1)
    live = norms > 0.0
    sv = np.linalg.svd(S[live] / norms[live, None], compute_uv=False)
    k = len(accepted)
    return float(sv[k] / sv[0]) if k < len(sv) else 0.0


def exploration_input(config: ExperimentConfig, t: int, x, accepted: list) -> tuple[np.ndarray, int]:
    """Input for exploration step ``t`` that adds a new independent lifted vector.

    Redraws from reseeded copies of the signal (up to ``max_retries`` times)
    before anything is applied to the plant. If no candidate raises the rank,
    the one that came closest is used.
    """
    best, best_strength = None, -1.0
    for attempt in range(config.max_retries + 1):
        spec = config.signal if attempt == 0 else replace(config.signal, seed=_retry_seed(config.signal.seed, attempt))
        u = generate(spec, t)
        xi = lift(x, u)
        if count_independent(accepted + [xi], tol=config.independence_tolerance) == len(accepted) + 1:
            return u, attempt
        strength = _new_direction_strength(accepted, xi)
        if strength > best_strength:
            best, best_strength = u, strength
    return best, config.max_retries


def explore(oracle: SystemOracle, config: ExperimentConfig):
    """Run the N exploration steps. Returns (records, data matrices, x(N), discounted cost so far)."""
    cost = config.cost
    x = np.asarray(config.x0, dtype=float)
    dm = DataMatrices(config.n, config.m, pe_tolerance=config.pe_tolerance)
    accepted: list = []
    records = []
    total = 0.0
    for t in range(config.N):
        u, retries = exploration_input(config, t, x, accepted)
        x_next = np.asarray(oracle.step(x, u), dtype=float)
        sample = LiftedSample(x, u, x_next)
        dm.accumulate(sample)
        accepted.append(sample.xi)
        c = stage_cost(cost, x, u)
        total += cost.gamma**t * c
        records.append(StepRecord(t, x, u, c, total, "explore", retries=retries))
        x = x_next
    return records, dm, x, total


def _solve(provider, config: ExperimentConfig, t) -> SolveReport:
    report = solve_frozen(provider, config.cost, config.iteration)
    if not report.converged:
        msg = (f"t={t}: policy iteration did not converge "
               f"(residual {report.final_residual:.3e} after {report.iterations} iterations)")
        if not config.best_effort_on_nonconvergence or not np.all(np.isfinite(report.K)):
            raise NonConvergenceError(msg, report)
        log.warning("%s; continuing with last gain", msg)
    return report


def _learning_loop(config, oracle, records, x, total, t0, provider_at, on_sample=None):
    cost = config.cost
    for t in range(t0, config.horizon + 1):
        if np.linalg.norm(x) < config.stop_norm:
            break
        if not np.all(np.isfinite(x)):
            raise NumericalError(f"t={t}: state is not finite")
        provider = provider_at(x)
        report = _solve(provider, config, t)
        K = report.K
        u = K @ x
        try:
            rho = spectral_radius(frozen_closed_loop(provider.G, K))
        except NumericalError:
            rho = float("nan")
        z = np.concatenate([x, u])
        trans = transversality_check(report.P_star, np.outer(z, z))
        x_next = np.asarray(oracle.step(x, u), dtype=float)
        c = stage_cost(cost, x, u)
        total += cost.gamma**t * c
        records.append(StepRecord(t, x, u, c, total, "learn", K=K, iterations=report.iterations,
                                  residual=report.final_residual, converged=report.converged,
                                  spectral_radius=rho, transversality=trans))
        if on_sample is not None:
            on_sample(LiftedSample(x, u, x_next))
        x = x_next
    return x, total


def _summary(log_: RunLog, config: ExperimentConfig, x_final, started) -> dict:
    learn = log_.learning_records()
    return {
        "mode": log_.mode,
        "n": config.n,
        "m": config.m,
        "N": config.N,
        "steps": len(log_.records),
        "condition_X": None if log_.data is None else log_.data.condition_X,
        "min_normalized_eigenvalue_X": None if log_.data is None else log_.data.min_eigenvalue_X,
        "total_discounted_cost": log_.total_cost,
        "final_state_norm": float(np.linalg.norm(x_final)),
        "all_converged": all(r.converged for r in learn),
        "max_spectral_radius": max((r.spectral_radius for r in learn), default=None),
        "wall_time_s": time.perf_counter() - started,
    }


def run_online(oracle: SystemOracle, config: ExperimentConfig) -> RunLog:
    """Explore for N steps, freeze the data, then learn a gain at every visited state."""
    started = time.perf_counter()
    records, dm, x, total = explore(oracle, config)
    dm.freeze()
    log.info("data frozen: condition_X=%.3e", dm.condition_X)
    state = {"data": dm}
    working = dm.copy() if config.continue_accumulation else None

    def provider_at(x_):
        return model_free_provider(state["data"], x_)

    def on_sample(sample):
        working.accumulate(sample)
        state["data"] = working.copy().freeze()

    x, total = _learning_loop(config, oracle, records, x, total, config.N, provider_at,
                              on_sample if working is not None else None)
    result = RunLog("model_free", config.n, config.m, records, data=dm)
    result.summary = _summary(result, config, x, started)
    return result


def run_model_based(sys: BilinearSystem, config: ExperimentConfig) -> RunLog:
    """Same loop with the true frozen map G(x) from t = 0 and no exploration."""
    started = time.perf_counter()
    records: list = []
    x, total = _learning_loop(config, PlantOracle(sys), records, np.asarray(config.x0, dtype=float), 0.0, 0,
                              lambda x_: model_based_provider(ltv_matrix(sys, x_)))
    result = RunLog("model_based", config.n, config.m, records)
    result.summary = _summary(result, config, x, started)
    return result


def write_outputs(log_: RunLog, out_dir, name: str) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"{name}.csv"
    log_.write_csv(path)
    return path


def joined_costs(logs: dict) -> list[list[str]]:
    """Rows of (t, discounted cost and state norm per mode), aligned on t."""
    names = list(logs)
    horizon = max(len(l.records) for l in logs.values())
    header = ["t"]
    for name in names:
        header += [f"{name}_discounted_cost", f"{name}_state_norm"]
    rows = [header]
    for t in range(horizon):
        row = [str(t)]
        for name in names:
            recs = logs[name].records
            if t < len(recs):
                row += [repr(float(recs[t].discounted_cost)), repr(float(np.linalg.norm(recs[t].x)))]
            else:
                row += ["", ""]
        rows.append(row)
    return rows
