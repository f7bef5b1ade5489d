"""Shared domain types: first-order function oracles, round reveals, traces.

Oracles wrap a value function and a subgradient function. Both callables are
expected to broadcast over a leading batch axis, i.e. accept ``x`` of shape
``(d,)`` or ``(n, d)``; the factories below all do. Hand-written oracles that
do not broadcast still work, batch evaluation then falls back to a loop.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

ABS_TOL = 1e-9


class EvaluationError(ValueError):
    """An oracle returned a non-finite value or gradient."""


class InsufficientSamplesError(ValueError):
    pass


@dataclass(frozen=True)
class FunctionOracle:
    value: Callable[[np.ndarray], object]
    grad: Callable[[np.ndarray], np.ndarray]
    strong_convexity: float = 0.0
    # Upper bound on the subgradient norm over the admissible set, if known.
    lipschitz: Optional[float] = None

    def evaluate(self, x: np.ndarray) -> float:
        v = float(self.value(x))
        if not np.isfinite(v):
            raise EvaluationError(f"non-finite oracle value {v}")
        return v

    def subgradient(self, x: np.ndarray) -> np.ndarray:
        g = np.asarray(self.grad(x), dtype=float)
        if not np.all(np.isfinite(g)):
            raise EvaluationError("non-finite subgradient")
        return g

    def evaluate_many(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(X)
        try:
            v = np.asarray(self.value(X), dtype=float)
        except Exception:
            v = None
        if v is None or v.shape != (X.shape[0],):
            v = np.array([float(self.value(x)) for x in X])
        if not np.all(np.isfinite(v)):
            raise EvaluationError("non-finite oracle value in batch")
        return v

    def subgradient_many(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(X)
        try:
            g = np.asarray(self.grad(X), dtype=float)
        except Exception:
            g = None
        if g is None or g.shape != X.shape:
            g = np.array([np.asarray(self.grad(x), dtype=float) for x in X])
        if not np.all(np.isfinite(g)):
            raise EvaluationError("non-finite subgradient in batch")
        return g


def quadratic(
    curvature: float = 0.0,
    center: Optional[np.ndarray] = None,
    linear: Optional[np.ndarray] = None,
    offset: float = 0.0,
    lipschitz: Optional[float] = None,
) -> FunctionOracle:
    """x -> curvature/2 * ||x - center||^2 + <linear, x> + offset.

    Covers linear functions (``curvature=0``), halfspace constraints and
    isotropic strongly convex quadratics with one closed form.
    """
    a = float(curvature)
    if a < 0:
        raise ValueError("curvature must be nonnegative")
    c = None if linear is None else np.asarray(linear, dtype=float)
    m = None if center is None else np.asarray(center, dtype=float)
    b = float(offset)

    def value(x):
        x = np.asarray(x, dtype=float)
        out = b
        if c is not None:
            out = out + x @ c
        if a and m is not None:
            diff = x - m
            out = out + 0.5 * a * np.sum(diff * diff, axis=-1)
        elif a:
            out = out + 0.5 * a * np.sum(x * x, axis=-1)
        return out

    def grad(x):
        x = np.asarray(x, dtype=float)
        g = np.zeros_like(x)
        if c is not None:
            g = g + c
        if a:
            g = g + a * (x - m if m is not None else x)
        return g

    return FunctionOracle(value, grad, strong_convexity=a, lipschitz=lipschitz)


def linear(c: np.ndarray, b: float = 0.0, lipschitz: Optional[float] = None) -> FunctionOracle:
    c = np.asarray(c, dtype=float)
    if lipschitz is None:
        lipschitz = float(np.linalg.norm(c))
    return quadratic(linear=c, offset=b, lipschitz=lipschitz)


def constant(v: float) -> FunctionOracle:
    def value(x):
        x = np.asarray(x, dtype=float)
        return np.full(x.shape[:-1], float(v)) if x.ndim > 1 else float(v)

    return FunctionOracle(value, lambda x: np.zeros_like(np.asarray(x, dtype=float)), 0.0, 0.0)


def combine(terms: Sequence[tuple[float, FunctionOracle]], strong_convexity: float = 0.0) -> FunctionOracle:
    """Nonnegative weighted sum of oracles (the surrogate builders use this)."""
    terms = [(float(w), f) for w, f in terms if w != 0.0]

    def value(x):
        out = 0.0
        for w, f in terms:
            out = out + w * np.asarray(f.value(x), dtype=float)
        if np.ndim(out) == 0 and np.ndim(x) > 1:
            out = np.zeros(np.shape(x)[0])
        return out

    def grad(x):
        out = np.zeros_like(np.asarray(x, dtype=float))
        for w, f in terms:
            out = out + w * np.asarray(f.grad(x), dtype=float)
        return out

    return FunctionOracle(value, grad, strong_convexity=strong_convexity)


@dataclass(frozen=True)
class RoundReveal:
    """What the adversary shows after seeing the action of a round."""

    constraints: tuple[FunctionOracle, ...]
    cost: Optional[FunctionOracle] = None

    def __post_init__(self):
        if len(self.constraints) < 1:
            raise ValueError("a reveal carries at least one constraint")
        object.__setattr__(self, "constraints", tuple(self.constraints))

    @property
    def k(self) -> int:
        return len(self.constraints)


@dataclass
class PolicyTrace:
    """One round of a policy run.

    The first seven fields make up the persisted CSV row; the rest are kept
    in memory for the certificate checks.
    """

    t: int
    action: np.ndarray
    cost_value: float
    constraint_values: np.ndarray
    queue_vector: np.ndarray
    step_size: float
    surrogate_grad_norm: float
    surrogate_strong_convexity: float = 0.0
    constraint_grad_norms: np.ndarray = field(default_factory=lambda: np.zeros(0))
    cost_grad_norm: float = 0.0
    theta: float = 0.0
    phase: int = 0


@dataclass(frozen=True)
class ProblemParams:
    d: int
    k: int
    T: int
    G: Optional[float] = None
    D: Optional[float] = None
    alpha: Optional[float] = None
    V: Optional[float] = None
    S: Optional[int] = None

    def __post_init__(self):
        if self.T < 1:
            raise ValueError("horizon T must be >= 1")
        if self.d < 1 or self.k < 1:
            raise ValueError("d and k must be positive")
        for name in ("G", "D", "alpha", "V", "S"):
            v = getattr(self, name)
            if v is not None and not v > 0:
                raise ValueError(f"{name} must be positive when given, got {v}")


def _sample_pairs(domain, n_pairs: int, rng_seed: int) -> tuple[np.ndarray, np.ndarray]:
    rng = np.random.default_rng(rng_seed)
    if hasattr(domain, "sample_many"):
        return domain.sample_many(rng, n_pairs), domain.sample_many(rng, n_pairs)
    X = np.array([domain.sample(rng) for _ in range(n_pairs)])
    Y = np.array([domain.sample(rng) for _ in range(n_pairs)])
    return X, Y


def verify_convexity_sample(
    oracle: FunctionOracle, domain, n_pairs: int = 200, rng_seed: int = 0, tol: float = ABS_TOL
) -> bool:
    """Check the first-order (strong) convexity inequality on random pairs."""
    if n_pairs < 1:
        raise ValueError("n_pairs must be >= 1")
    X, Y = _sample_pairs(domain, n_pairs, rng_seed)
    fx = oracle.evaluate_many(X)
    fy = oracle.evaluate_many(Y)
    gx = oracle.subgradient_many(X)
    diff = Y - X
    lower = fx + np.sum(gx * diff, axis=1) + 0.5 * oracle.strong_convexity * np.sum(diff * diff, axis=1)
    scale = np.maximum(1.0, np.abs(fy))
    return bool(np.all(fy >= lower - tol * scale))


def lipschitz_estimate(oracle: FunctionOracle, domain, n_pairs: int = 1000, rng_seed: int = 0) -> float:
    """Largest difference quotient |f(x)-f(y)|/||x-y|| over sampled pairs."""
    if n_pairs < 1:
        raise ValueError("n_pairs must be >= 1")
    X, Y = _sample_pairs(domain, n_pairs, rng_seed)
    dist = np.linalg.norm(X - Y, axis=1)
    keep = dist > 0
    if not np.any(keep):
        raise InsufficientSamplesError("all sampled pairs coincide")
    fx = oracle.evaluate_many(X[keep])
    fy = oracle.evaluate_many(Y[keep])
    return float(np.max(np.abs(fx - fy) / dist[keep]))
