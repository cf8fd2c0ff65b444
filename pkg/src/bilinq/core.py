"""Bilinear plant, its LTV and lifted-LTI views, and the quadratic stage cost.

The plant is

    x(t+1) = A x + B u + sum_j x_j D_j u

With z = [x; u] and xi = [x; u; x (x) u] it can equivalently be written as
x(t+1) = G(x) z = H xi, where G(x) = [A | B + sum_j x_j D_j] and
H = [A | B | D_1 ... D_n]. The lifted block is ordered (x_1 u; ...; x_n u),
so that H L(x) = G(x) with L(x) = [I 0; 0 I; 0 x (x) I_m].
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Protocol, Sequence

import numpy as np

from .errors import InvalidArgumentError, NumericalError


def _as_matrix(a, name) -> np.ndarray:
    arr = np.array(a, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    if arr.ndim != 2:
        raise InvalidArgumentError(f"{name} must be a matrix, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidArgumentError(f"{name} has non-finite entries")
    arr.setflags(write=False)
    return arr


def _as_vector(v, size, name) -> np.ndarray:
    arr = np.asarray(v, dtype=float).reshape(-1)
    if arr.shape[0] != size:
        raise InvalidArgumentError(f"{name} must have length {size}, got {arr.shape[0]}")
    return arr


@dataclass(frozen=True)
class BilinearSystem:
    """Plant matrices. ``D`` is stored as an array of shape (n, n, m), ``D[j] = D_j``."""

    A: np.ndarray
    B: np.ndarray
    D: np.ndarray

    def __post_init__(self):
        A = _as_matrix(self.A, "A")
        B = _as_matrix(self.B, "B")
        n = A.shape[0]
        if A.shape != (n, n):
            raise InvalidArgumentError(f"A must be square, got {A.shape}")
        if B.shape[0] != n:
            raise InvalidArgumentError(f"B must have {n} rows, got {B.shape}")
        m = B.shape[1]
        D = np.array(self.D, dtype=float)
        if D.ndim == 2 and n == 1:
            D = D.reshape(1, 1, m)
        if D.shape != (n, n, m):
            raise InvalidArgumentError(f"D must hold {n} matrices of shape ({n}, {m}), got {D.shape}")
        if not np.all(np.isfinite(D)):
            raise InvalidArgumentError("D has non-finite entries")
        D.setflags(write=False)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "D", D)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]

    @property
    def N(self) -> int:
        return lifted_dim(self.n, self.m)


def lifted_dim(n: int, m: int) -> int:
    return n + m + n * m


@dataclass(frozen=True)
class LiftedSample:
    """One transition (x, u, x_next) with the derived regressors z and xi."""

    x: np.ndarray
    u: np.ndarray
    x_next: np.ndarray
    z: np.ndarray = field(init=False, repr=False)
    xi: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float).reshape(-1)
        u = np.asarray(self.u, dtype=float).reshape(-1)
        x_next = _as_vector(self.x_next, x.shape[0], "x_next")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "x_next", x_next)
        object.__setattr__(self, "z", np.concatenate([x, u]))
        object.__setattr__(self, "xi", lift(x, u))


def lift(x, u) -> np.ndarray:
    """xi = [x; u; x (x) u]."""
    x = np.asarray(x, dtype=float).reshape(-1)
    u = np.asarray(u, dtype=float).reshape(-1)
    return np.concatenate([x, u, np.kron(x, u)])


@dataclass(frozen=True)
class CostSpec:
    """Quadratic penalty ``Lambda`` on z = [x; u] and discount ``gamma``."""

    Lambda: np.ndarray
    gamma: float
    n: int

    def __post_init__(self):
        L = np.array(self.Lambda, dtype=float)
        if L.ndim != 2 or L.shape[0] != L.shape[1]:
            raise InvalidArgumentError(f"Lambda must be square, got {L.shape}")
        if not np.all(np.isfinite(L)):
            raise InvalidArgumentError("Lambda has non-finite entries")
        L = 0.5 * (L + L.T)
        n = int(self.n)
        if not 0 < n < L.shape[0]:
            raise InvalidArgumentError(f"state dimension {n} incompatible with Lambda of size {L.shape[0]}")
        if not 0.0 < float(self.gamma) < 1.0:
            raise InvalidArgumentError(f"gamma must lie in (0, 1), got {self.gamma}")
        if np.linalg.eigvalsh(L[n:, n:]).min() <= 0.0:
            raise InvalidArgumentError("Lambda_mm must be positive definite")
        L.setflags(write=False)
        object.__setattr__(self, "Lambda", L)
        object.__setattr__(self, "gamma", float(self.gamma))
        object.__setattr__(self, "n", n)

    @property
    def m(self) -> int:
        return self.Lambda.shape[0] - self.n

    @property
    def nn(self):
        return self.Lambda[: self.n, : self.n]

    @property
    def nm(self):
        return self.Lambda[: self.n, self.n :]

    @property
    def mm(self):
        return self.Lambda[self.n :, self.n :]


class SystemOracle(Protocol):
    """Black-box plant: the only way learner code may touch the dynamics."""

    def step(self, x: np.ndarray, u: np.ndarray) -> np.ndarray: ...


class PlantOracle:
    """Wraps a :class:`BilinearSystem` behind the :class:`SystemOracle` contract."""

    __slots__ = ("_sys",)

    def __init__(self, sys: BilinearSystem):
        self._sys = sys

    def step(self, x, u):
        return step(self._sys, x, u)


def _check_xu(sys: BilinearSystem, x, u):
    return _as_vector(x, sys.n, "x"), _as_vector(u, sys.m, "u")


def step(sys: BilinearSystem, x, u) -> np.ndarray:
    x, u = _check_xu(sys, x, u)
    return sys.A @ x + sys.B @ u + np.einsum("j,jim,m->i", x, sys.D, u)


def input_matrix(sys: BilinearSystem, x) -> np.ndarray:
    """State-dependent input matrix B + sum_j x_j D_j."""
    x = _as_vector(x, sys.n, "x")
    return sys.B + np.tensordot(x, sys.D, axes=1)


def ltv_matrix(sys: BilinearSystem, x) -> np.ndarray:
    """G(x) = [A | B + sum_j x_j D_j], shape n x (n+m)."""
    return np.hstack([sys.A, input_matrix(sys, x)])


def lift_selector(x, m: int) -> np.ndarray:
    """L(x) with L(x) @ [x; u] = [x; u; x (x) u], shape N x (n+m)."""
    x = np.asarray(x, dtype=float).reshape(-1)
    n = x.shape[0]
    L = np.zeros((lifted_dim(n, m), n + m))
    L[: n + m, : n + m] = np.eye(n + m)
    L[n + m :, n:] = np.kron(x.reshape(n, 1), np.eye(m))
    return L


def lti_matrix(sys: BilinearSystem) -> np.ndarray:
    """H = [A | B | D_1 ... D_n], shape n x N."""
    return np.hstack([sys.A, sys.B, *sys.D])


def stage_cost(cost: CostSpec, x, u) -> float:
    z = np.concatenate([np.asarray(x, dtype=float).reshape(-1), np.asarray(u, dtype=float).reshape(-1)])
    if z.shape[0] != cost.Lambda.shape[0]:
        raise InvalidArgumentError(f"[x; u] has length {z.shape[0]}, Lambda is {cost.Lambda.shape}")
    return float(z @ cost.Lambda @ z)


def spectral_radius(M) -> float:
    try:
        return float(np.max(np.abs(np.linalg.eigvals(M))))
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"eigenvalue computation failed: {exc}") from exc


def closed_loop_spectral_radius(sys: BilinearSystem, x, K) -> float:
    """rho(A + (B + sum_j x_j D_j) K) for the loop frozen at state ``x``."""
    K = np.asarray(K, dtype=float).reshape(sys.m, sys.n)
    return spectral_radius(sys.A + input_matrix(sys, x) @ K)


def detectability_check(sys: BilinearSystem, cost: CostSpec, tol: float = 1e-9) -> bool:
    """PBH test of (A - B Lmm^-1 Lnm^T, Schur(Lambda)) on the non-strictly-stable modes."""
    if cost.n != sys.n or cost.m != sys.m:
        raise InvalidArgumentError("cost and system dimensions differ")
    try:
        Lmm_inv_Lmn = np.linalg.solve(cost.mm, cost.nm.T)
    except np.linalg.LinAlgError as exc:
        raise InvalidArgumentError("Lambda_mm is singular") from exc
    A_d = sys.A - sys.B @ Lmm_inv_Lmn
    Q_s = cost.nn - cost.nm @ Lmm_inv_Lmn
    n = sys.n
    for lam in np.linalg.eigvals(A_d):
        if abs(lam) < 1.0 - tol:
            continue
        pbh = np.vstack([A_d - lam * np.eye(n), Q_s])
        s = np.linalg.svd(pbh, compute_uv=False)
        if s[-1] <= tol * max(1.0, s[0]):
            return False
    return True


def random_system(rng: np.random.Generator, n: int, m: int, scale: float = 1.0) -> BilinearSystem:
    """Plant with entries uniform in [-scale, scale]."""
    return BilinearSystem(
        A=rng.uniform(-scale, scale, (n, n)),
        B=rng.uniform(-scale, scale, (n, m)),
        D=rng.uniform(-scale, scale, (n, n, m)),
    )


def stack_d(mats: Sequence) -> np.ndarray:
    """Stack a list of n matrices D_j (each n x m) into the (n, n, m) layout."""
    return np.stack([np.atleast_2d(np.asarray(d, dtype=float)) for d in mats])
