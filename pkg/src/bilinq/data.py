"""Data matrices from one trajectory and the model-free closed-loop reconstruction.

Samples are folded into Gram sums

    X = sum xi xi^T,   Z = sum x_next xi^T,   V = sum z xi^T,   W = V V^T

and, once X is positive definite, the frozen-state map is rebuilt as

    U_x(K) = [I; K] Z Y(x) V^T W^+,   with  X Y(x) = L(x) V.

Alongside the sums we keep a triangular factor R of the sample matrix (so
X = R^T R) and C with Z = C^T R, both updated by a small QR per sample. Solves
with X go through R, whose condition number is the square root of X's.
No estimate of the plant matrices is ever formed.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .core import LiftedSample, lift_selector, lifted_dim
from .errors import (
    DegenerateDataError,
    FrozenDataError,
    InvalidArgumentError,
    NotPersistentlyExcitingError,
    NumericalError,
)
from .excitation import PE_TOLERANCE, RANK_TOLERANCE, normalized_min_eigenvalue


@dataclass
class DataMatrices:
    n: int
    m: int
    X: np.ndarray = None
    Z: np.ndarray = None
    V: np.ndarray = None
    W: np.ndarray = None
    sample_count: int = 0
    frozen: bool = False
    condition_X: float = float("nan")
    min_eigenvalue_X: float = float("nan")
    pe_tolerance: float = PE_TOLERANCE
    rank_tolerance: float = RANK_TOLERANCE
    R: np.ndarray = field(default=None, repr=False)
    C: np.ndarray = field(default=None, repr=False)
    _v_pinv: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        N = self.N
        if self.X is None:
            self.X = np.zeros((N, N))
        if self.Z is None:
            self.Z = np.zeros((self.n, N))
        if self.V is None:
            self.V = np.zeros((self.n + self.m, N))
        if self.R is None and self.sample_count == 0:
            self.R = np.zeros((0, N))
            self.C = np.zeros((0, self.n))

    @property
    def N(self) -> int:
        return lifted_dim(self.n, self.m)

    def copy(self) -> "DataMatrices":
        return DataMatrices(
            self.n, self.m, self.X.copy(), self.Z.copy(), self.V.copy(),
            sample_count=self.sample_count,
            pe_tolerance=self.pe_tolerance, rank_tolerance=self.rank_tolerance,
            R=None if self.R is None else self.R.copy(), C=None if self.C is None else self.C.copy(),
        )

    def accumulate(self, sample: LiftedSample) -> "DataMatrices":
        if self.frozen:
            raise FrozenDataError("data matrices are frozen")
        if sample.x.shape[0] != self.n or sample.u.shape[0] != self.m:
            raise InvalidArgumentError(
                f"sample has (n, m) = ({sample.x.shape[0]}, {sample.u.shape[0]}), expected ({self.n}, {self.m})"
            )
        xi = sample.xi
        self.X += np.outer(xi, xi)
        self.Z += np.outer(sample.x_next, xi)
        self.V += np.outer(sample.z, xi)
        if self.R is not None:
            q, r = np.linalg.qr(np.vstack([self.R, xi]))
            c = q.T @ np.vstack([self.C, sample.x_next])
            k = min(r.shape[0], self.N)
            self.R, self.C = r[:k], c[:k]
        self.sample_count += 1
        return self

    def freeze(self) -> "DataMatrices":
        """Stop accumulation after checking that X is positive definite."""
        if self.frozen:
            return self
        if self.sample_count < self.N:
            raise NotPersistentlyExcitingError(
                f"only {self.sample_count} samples, at least N = {self.N} are required", 0.0
            )
        self.X = 0.5 * (self.X + self.X.T)
        lam = normalized_min_eigenvalue(self.X)
        self.min_eigenvalue_X = lam
        ev = np.linalg.eigvalsh(self.X)
        self.condition_X = float(ev[-1] / ev[0]) if ev[0] > 0 else float("inf")
        if not lam > self.pe_tolerance:
            raise NotPersistentlyExcitingError(
                f"X is not positive definite: normalized min eigenvalue {lam:.3e} <= {self.pe_tolerance:.1e}", lam
            )
        self.W = self.V @ self.V.T
        for arr in (self.X, self.Z, self.V, self.W):
            arr.setflags(write=False)
        self.frozen = True
        return self

    def _factor(self):
        """Upper-triangular R with X = R^T R and C with Z = C^T R."""
        if not self.frozen:
            raise FrozenDataError("freeze the data matrices before reconstruction")
        if self.R is None or self.R.shape[0] < self.N:
            # Only the sums are known (e.g. loaded from a dump): fall back to Cholesky.
            s = 1.0 / np.sqrt(np.diag(self.X))
            try:
                L = np.linalg.cholesky(self.X * s[:, None] * s[None, :])
            except np.linalg.LinAlgError as exc:
                raise NumericalError(f"Cholesky of X failed: {exc}", self.condition_X) from exc
            self.R = L.T / s[None, :]
            self.C = sla.solve_triangular(self.R, self.Z.T, trans="T")
        if np.any(np.abs(np.diag(self.R)) == 0.0):
            raise NumericalError("triangular factor of X is singular", self.condition_X)
        return self.R, self.C

    def _x_solve(self, rhs) -> np.ndarray:
        R, _ = self._factor()
        return sla.solve_triangular(R, sla.solve_triangular(R, rhs, trans="T"))

    def _right_inverse_of_v(self) -> np.ndarray:
        """V^T W^+ computed as the pseudoinverse of row-scaled V.

        Identical to V^T (V V^T)^+ for full row rank, with the conditioning
        of V rather than of W = V V^T.
        """
        if self._v_pinv is None:
            r = np.linalg.norm(self.V, axis=1)
            if np.any(r == 0.0):
                raise DegenerateDataError("a component of z never moved; W is singular", 0.0)
            Vs = self.V / r[:, None]
            sv = np.linalg.svd(Vs, compute_uv=False)
            lam = float(sv[-1] ** 2)
            if not lam > self.pe_tolerance:
                raise DegenerateDataError(
                    f"z sequence is not persistently exciting: normalized min eigenvalue of W {lam:.3e}", lam
                )
            self._v_pinv = np.linalg.pinv(Vs, rcond=self.rank_tolerance) / r[None, :]
        return self._v_pinv

    def solve_y(self, x) -> np.ndarray:
        """Y(x) with X Y = L(x) V."""
        return self._x_solve(lift_selector(x, self.m) @ self.V)

    def ltv_estimate(self, x) -> np.ndarray:
        """Data-only estimate of G(x), i.e. Z Y(x) V^T W^+ (shape n x (n+m)).

        Evaluated as C^T R^{-T} L(x) (V V^T W^+), which equals Z X^{-1} L(x) V V^T W^+.
        Multiplying V into its own right inverse first keeps the error of the
        X solve from being amplified by the conditioning of V.
        """
        R, C = self._factor()
        q = sla.solve_triangular(R, lift_selector(x, self.m), trans="T")
        return (C.T @ q) @ (self.V @ self._right_inverse_of_v())

    def reconstruct_closed_loop(self, x, K) -> np.ndarray:
        K = np.asarray(K, dtype=float).reshape(self.m, self.n)
        return np.vstack([np.eye(self.n), K]) @ self.ltv_estimate(x)

    def dump_csv(self, path) -> None:
        """Write the matrices row-major after a header row carrying the dimensions."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["n", "m", "N", "sample_count", "frozen", "condition_X"])
            w.writerow([self.n, self.m, self.N, self.sample_count, int(self.frozen), repr(self.condition_X)])
            for name in ("X", "Z", "V", "W", "R", "C"):
                arr = getattr(self, name)
                if arr is None or arr.size == 0:
                    continue
                w.writerow([name, arr.shape[0], arr.shape[1], *map(repr, arr.ravel().tolist())])

    @classmethod
    def load_csv(cls, path) -> "DataMatrices":
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        n, m, _, count, frozen, cond = rows[1]
        mats = {}
        for row in rows[2:]:
            r, c = int(row[1]), int(row[2])
            mats[row[0]] = np.array([float(v) for v in row[3:]]).reshape(r, c)
        dm = cls(int(n), int(m), mats["X"].copy(), mats["Z"].copy(), mats["V"].copy(), sample_count=int(count),
                 R=mats.get("R"), C=mats.get("C"))
        if int(frozen):
            dm.freeze()
        return dm


# Function-style aliases.

def accumulate(dm: DataMatrices, sample: LiftedSample) -> DataMatrices:
    return dm.accumulate(sample)


def freeze(dm: DataMatrices) -> DataMatrices:
    return dm.freeze()


def solve_y(dm: DataMatrices, x) -> np.ndarray:
    return dm.solve_y(x)


def reconstruct_closed_loop(dm: DataMatrices, x, K) -> np.ndarray:
    return dm.reconstruct_closed_loop(x, K)


def collect(oracle, inputs, x0) -> tuple[DataMatrices, np.ndarray]:
    """Drive ``oracle`` open loop with ``inputs`` from ``x0``; returns data and final state."""
    inputs = np.atleast_2d(np.asarray(inputs, dtype=float))
    x = np.asarray(x0, dtype=float).reshape(-1)
    dm = DataMatrices(x.shape[0], inputs.shape[1])
    for u in inputs:
        x_next = np.asarray(oracle.step(x, u), dtype=float)
        dm.accumulate(LiftedSample(x, u, x_next))
        x = x_next
    return dm, x
