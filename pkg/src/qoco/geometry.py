"""Admissible sets with Euclidean projection, sampling and diameters.

Birkhoff matrices are stored flattened row-major, so an N x N doubly
stochastic matrix is an action vector of length N**2.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numba
import numpy as np

BIRKHOFF_TOL = 1e-8
BIRKHOFF_MAX_SWEEPS = 10_000


class ProjectionError(RuntimeError):
    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (residual {residual:.3e})")
        self.residual = residual


@dataclass(frozen=True)
class AdmissibleSet:
    kind: str
    dim: int
    lo: Optional[np.ndarray] = None
    hi: Optional[np.ndarray] = None
    center: Optional[np.ndarray] = None
    radius: float = 0.0
    n: int = 0

    @staticmethod
    def box(lo, hi) -> "AdmissibleSet":
        lo = np.atleast_1d(np.asarray(lo, dtype=float))
        hi = np.atleast_1d(np.asarray(hi, dtype=float))
        if lo.shape != hi.shape or np.any(lo > hi):
            raise ValueError("box needs lo <= hi with matching shapes")
        return AdmissibleSet("box", lo.size, lo=lo, hi=hi)

    @staticmethod
    def ball(center, radius: float) -> "AdmissibleSet":
        center = np.atleast_1d(np.asarray(center, dtype=float))
        if radius < 0:
            raise ValueError("radius must be nonnegative")
        return AdmissibleSet("ball", center.size, center=center, radius=float(radius))

    @staticmethod
    def simplex(dim: int) -> "AdmissibleSet":
        if dim < 1:
            raise ValueError("simplex dimension must be >= 1")
        return AdmissibleSet("simplex", int(dim))

    @staticmethod
    def birkhoff(n: int) -> "AdmissibleSet":
        if n < 1:
            raise ValueError("birkhoff order must be >= 1")
        return AdmissibleSet("birkhoff", int(n) * int(n), n=int(n))

    @property
    def diameter(self) -> float:
        return diameter(self)

    def project(self, x) -> np.ndarray:
        return project(self, x)

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        return _sample(self, rng)

    def sample_many(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return _sample_many(self, rng, n)

    def contains(self, x, tol: float = 1e-8) -> bool:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dim,):
            return False
        if self.kind == "box":
            return bool(np.all(x >= self.lo - tol) and np.all(x <= self.hi + tol))
        if self.kind == "ball":
            return bool(np.linalg.norm(x - self.center) <= self.radius + tol)
        if self.kind == "simplex":
            return bool(np.all(x >= -tol) and abs(x.sum() - 1.0) <= tol)
        M = x.reshape(self.n, self.n)
        return bool(
            np.all(M >= -tol)
            and np.all(np.abs(M.sum(axis=0) - 1) <= tol)
            and np.all(np.abs(M.sum(axis=1) - 1) <= tol)
        )


def diameter(s: AdmissibleSet) -> float:
    if s.kind == "box":
        return float(np.linalg.norm(s.hi - s.lo))
    if s.kind == "ball":
        return 2.0 * s.radius
    if s.kind == "simplex":
        return float(np.sqrt(2.0)) if s.dim > 1 else 0.0
    return float(np.sqrt(2.0 * s.n)) if s.n > 1 else 0.0


def project_simplex(v: np.ndarray) -> np.ndarray:
    """Euclidean projection onto the probability simplex by sorting."""
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    idx = np.arange(1, v.size + 1)
    rho = np.nonzero(u - css / idx > 0)[0][-1]
    tau = css[rho] / (rho + 1)
    return np.maximum(v - tau, 0.0)


@numba.njit(cache=True)
def _dykstra(X, tol, max_sweeps):
    # Alternates the exact affine projection onto {unit row and column sums}
    # with clamping to the nonnegative orthant. Only the orthant step needs a
    # Dykstra correction since the affine projection is linear.
    n = X.shape[0]
    Y = X.copy()
    P = np.zeros_like(X)
    A = np.empty_like(X)
    r = np.empty(n)
    c = np.empty(n)
    residual = np.inf
    for sweep in range(max_sweeps):
        total = 0.0
        for i in range(n):
            r[i] = 0.0
            c[i] = 0.0
        for i in range(n):
            for j in range(n):
                r[i] += Y[i, j]
                c[j] += Y[i, j]
                total += Y[i, j]
        shift = (total - n) / (n * n)
        for i in range(n):
            for j in range(n):
                A[i, j] = Y[i, j] - (r[i] - 1.0) / n - (c[j] - 1.0) / n + shift
        residual = 0.0
        for i in range(n):
            r[i] = 0.0
            c[i] = 0.0
        for i in range(n):
            for j in range(n):
                z = A[i, j] + P[i, j]
                y = z if z > 0.0 else 0.0
                P[i, j] = z - y
                Y[i, j] = y
                r[i] += y
                c[j] += y
        for i in range(n):
            residual = max(residual, abs(r[i] - 1.0), abs(c[i] - 1.0))
        if residual <= tol:
            return Y, residual, sweep + 1
    return Y, residual, max_sweeps


def project_birkhoff(x: np.ndarray, n: int, tol: float = BIRKHOFF_TOL, max_sweeps: int = BIRKHOFF_MAX_SWEEPS):
    """Dykstra's alternating projection onto the doubly stochastic matrices."""
    X = np.asarray(x, dtype=float).reshape(n, n)
    if n == 1:
        return np.ones(1)
    Y, residual, _ = _dykstra(np.ascontiguousarray(X), tol, max_sweeps)
    if residual > tol:
        raise ProjectionError("birkhoff projection did not converge", residual)
    return Y.ravel()


def project(s: AdmissibleSet, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape != (s.dim,):
        raise ValueError(f"dimension mismatch: expected ({s.dim},), got {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValueError("cannot project a non-finite point")
    if s.kind == "box":
        return np.clip(x, s.lo, s.hi)
    if s.kind == "ball":
        diff = x - s.center
        norm = float(np.linalg.norm(diff))
        if norm <= s.radius:
            return x.copy()
        return s.center + diff * (s.radius / norm)
    if s.kind == "simplex":
        return project_simplex(x)
    return project_birkhoff(x, s.n)


def _sample(s: AdmissibleSet, rng: np.random.Generator) -> np.ndarray:
    if s.kind == "box":
        return rng.uniform(s.lo, s.hi)
    if s.kind == "ball":
        direction = rng.standard_normal(s.dim)
        direction /= max(np.linalg.norm(direction), 1e-300)
        return s.center + s.radius * rng.uniform() ** (1.0 / s.dim) * direction
    if s.kind == "simplex":
        e = rng.exponential(size=s.dim)
        return e / e.sum()
    return project_birkhoff(rng.uniform(0.0, 1.0, size=s.dim), s.n)


def _sample_many(s: AdmissibleSet, rng: np.random.Generator, n: int) -> np.ndarray:
    if s.kind == "box":
        return rng.uniform(s.lo, s.hi, size=(n, s.dim))
    if s.kind == "ball":
        d = rng.standard_normal((n, s.dim))
        d /= np.maximum(np.linalg.norm(d, axis=1, keepdims=True), 1e-300)
        return s.center + s.radius * rng.uniform(size=(n, 1)) ** (1.0 / s.dim) * d
    if s.kind == "simplex":
        e = rng.exponential(size=(n, s.dim))
        return e / e.sum(axis=1, keepdims=True)
    return np.array([_sample(s, rng) for _ in range(n)])


def sample_uniform(s: AdmissibleSet, rng_seed: int) -> np.ndarray:
    return _sample(s, np.random.default_rng(rng_seed))
