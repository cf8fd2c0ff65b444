"""Frozen-state policy iteration on the Q-function costate matrix.

At a fixed state the closed-loop map U(K) = [I; K] G is a constant-coefficient
problem. Starting from P = Lambda the iteration alternates

    K <- -P_mm^{-1} P_nm^T                  (improvement)
    P <- Lambda + gamma U(K)^T P U(K)       (evaluation)

until successive costates agree to ``epsilon``. ``U`` comes from a provider,
either the data reconstruction or the true model; the iteration itself never
sees which.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.linalg as sla

from .core import CostSpec, spectral_radius
from .errors import InvalidArgumentError, NotStabilizableError, SecondOrderConditionError

Provider = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class CostateMatrix:
    P: np.ndarray
    n: int

    def __post_init__(self):
        P = np.array(self.P, dtype=float)
        if P.ndim != 2 or P.shape[0] != P.shape[1] or not 0 < self.n < P.shape[0]:
            raise InvalidArgumentError(f"bad costate shape {P.shape} for n = {self.n}")
        P = 0.5 * (P + P.T)
        P.setflags(write=False)
        object.__setattr__(self, "P", P)

    @property
    def m(self) -> int:
        return self.P.shape[0] - self.n

    @property
    def nn(self):
        return self.P[: self.n, : self.n]

    @property
    def nm(self):
        return self.P[: self.n, self.n :]

    @property
    def mm(self):
        return self.P[self.n :, self.n :]


@dataclass(frozen=True)
class IterationConfig:
    """``stall_window``: give up early once the residual has gone this many
    iterations without a new minimum (0 disables). Only ever turns a run that
    would end unconverged into one that ends unconverged sooner."""

    epsilon: float = 1e-10
    max_iterations: int = 10000
    stall_window: int = 500

    def __post_init__(self):
        if not self.epsilon > 0:
            raise InvalidArgumentError("epsilon must be positive")
        if self.max_iterations < 1:
            raise InvalidArgumentError("max_iterations must be >= 1")
        if self.stall_window < 0:
            raise InvalidArgumentError("stall_window must be >= 0")


@dataclass(frozen=True)
class SolveReport:
    K: np.ndarray
    P_star: CostateMatrix
    iterations: int
    final_residual: float
    converged: bool


def improve_gain(P: CostateMatrix) -> np.ndarray:
    """Minimizing gain of the quadratic form of P: K = -P_mm^{-1} P_nm^T."""
    try:
        c = sla.cho_factor(P.mm, lower=True)
    except np.linalg.LinAlgError as exc:
        raise SecondOrderConditionError("P_mm is not positive definite") from exc
    return -sla.cho_solve(c, P.nm.T)


def evaluate_step(P: CostateMatrix, U, cost: CostSpec) -> CostateMatrix:
    """Lambda + gamma U^T P U."""
    U = np.asarray(U, dtype=float)
    if U.shape != P.P.shape:
        raise InvalidArgumentError(f"closed-loop map has shape {U.shape}, expected {P.P.shape}")
    return CostateMatrix(cost.Lambda + cost.gamma * U.T @ P.P @ U, P.n)


def solve_frozen(provider: Provider, cost: CostSpec, iteration: IterationConfig = IterationConfig(),
                 P0=None) -> SolveReport:
    """Iterate improvement and evaluation from ``P0`` (default Lambda) to a fixed point.

    Non-convergence is reported through ``converged=False``; the caller decides.
    """
    P = CostateMatrix(cost.Lambda if P0 is None else P0, cost.n)
    residual = best = float("inf")
    best_at = 0
    it = 0
    while it < iteration.max_iterations:
        K = improve_gain(P)
        P_next = evaluate_step(P, provider(K), cost)
        residual = float(np.linalg.norm(P_next.P - P.P))
        P = P_next
        it += 1
        if not np.isfinite(residual) or residual <= iteration.epsilon:
            break
        if residual < best:
            best, best_at = residual, it
        elif iteration.stall_window and it - best_at >= iteration.stall_window:
            break
    K = improve_gain(P) if np.all(np.isfinite(P.P)) else np.full((cost.m, cost.n), np.nan)
    return SolveReport(K=K, P_star=P, iterations=it, final_residual=residual,
                       converged=bool(residual <= iteration.epsilon))


class FrozenProvider:
    """K -> [I; K] G for a frozen map G = [A_f | B_f] of shape n x (n+m)."""

    def __init__(self, G):
        self.G = np.asarray(G, dtype=float)
        self.n = self.G.shape[0]

    def __call__(self, K) -> np.ndarray:
        return np.vstack([np.eye(self.n), K]) @ self.G


def model_based_provider(G) -> FrozenProvider:
    return FrozenProvider(G)


def model_free_provider(data, x) -> FrozenProvider:
    """Provider backed by the data reconstruction at state ``x``."""
    return FrozenProvider(data.ltv_estimate(x))


def frozen_closed_loop(G, K) -> np.ndarray:
    """A_f + B_f K from a frozen map G = [A_f | B_f]."""
    G = np.asarray(G, dtype=float)
    n = G.shape[0]
    return G[:, :n] + G[:, n:] @ K


def oracle_riccati(A_f, B_f, cost: CostSpec, tol: float = 1e-13, max_iterations: int = 200000,
                   overflow: float = 1e12):
    """Discounted value-function Riccati recursion from M = 0.

    M <- L_nn + g A^T M A - (L_nm + g A^T M B)(L_mm + g B^T M B)^{-1}(L_nm + g A^T M B)^T

    Independent of :func:`solve_frozen`: it iterates the n x n value matrix
    rather than the (n+m) x (n+m) Q-matrix. Returns ``(K, M)``.
    """
    A = np.asarray(A_f, dtype=float)
    B = np.asarray(B_f, dtype=float)
    g = cost.gamma
    Lnn, Lnm, Lmm = cost.nn, cost.nm, cost.mm
    M = np.zeros_like(A)
    for _ in range(max_iterations):
        cross = Lnm + g * A.T @ M @ B
        R = Lmm + g * B.T @ M @ B
        M_next = Lnn + g * A.T @ M @ A - cross @ np.linalg.solve(R, cross.T)
        M_next = 0.5 * (M_next + M_next.T)
        if not np.all(np.isfinite(M_next)) or np.linalg.norm(M_next) > overflow * (1.0 + np.linalg.norm(Lnn)):
            raise NotStabilizableError("value iteration diverged; frozen pair is not stabilizable")
        done = np.linalg.norm(M_next - M) <= tol * (1.0 + np.linalg.norm(M_next))
        M = M_next
        if done:
            break
    else:
        raise NotStabilizableError(f"value iteration did not settle in {max_iterations} steps")
    R = Lmm + g * B.T @ M @ B
    K = -np.linalg.solve(R, Lnm.T + g * B.T @ M @ A)
    return K, M


def hamiltonian_value(P: CostateMatrix, S_prev, U, cost: CostSpec, S=None) -> float:
    """Tr(Lambda S) + gamma Tr(P^T U S_prev U^T).

    ``S`` defaults to the propagated U S_prev U^T. Passing it explicitly holds
    the state argument fixed, which is how minimality over the gain is probed.
    """
    U = np.asarray(U, dtype=float)
    S_prev = np.asarray(S_prev, dtype=float)
    propagated = U @ S_prev @ U.T
    if S is None:
        S = propagated
    return float(np.trace(cost.Lambda @ S) + cost.gamma * np.trace(P.P.T @ propagated))


def transversality_check(P: CostateMatrix, S, tol: float = 1e-9) -> bool:
    """Whether sym(S P) is positive semidefinite up to ``tol``."""
    SP = np.asarray(S, dtype=float) @ P.P
    return bool(np.linalg.eigvalsh(0.5 * (SP + SP.T))[0] >= -tol)


def discounted_stable(G, K, gamma: float) -> bool:
    return gamma * spectral_radius(frozen_closed_loop(G, K)) ** 2 < 1.0


def multistart_spread(provider: Provider, cost: CostSpec, iteration: IterationConfig = IterationConfig(),
                      starts: int = 5, scale: float = 1.0, seed: int = 0) -> float:
    """Largest gain difference across solves started from Lambda + random PSD perturbations.

    A diagnostic for uniqueness of the fixed point; zero up to tolerance is expected.
    """
    rng = np.random.default_rng(seed)
    base = solve_frozen(provider, cost, iteration).K
    spread = 0.0
    d = cost.Lambda.shape[0]
    for _ in range(starts):
        E = rng.standard_normal((d, d))
        K = solve_frozen(provider, cost, iteration, P0=cost.Lambda + scale * E @ E.T).K
        spread = max(spread, float(np.linalg.norm(K - base)))
    return spread
