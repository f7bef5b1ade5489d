"""Base online learners: adaptive projected OGD and FTPL over permutations."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.optimize import linear_sum_assignment

from .geometry import AdmissibleSet

MODES = ("adaptive_convex", "adaptive_strongly_convex", "ftpl")


@dataclass(frozen=True)
class SurrogateFeedback:
    gradient: np.ndarray
    strong_convexity: float = 0.0


@dataclass
class LearnerState:
    current_action: np.ndarray
    mode: str
    diameter: float
    sq_grad_sum: float = 0.0
    strong_convexity_sum: float = 0.0
    ftpl_cumulative_gradient: Optional[np.ndarray] = None
    ftpl_scale: float = 1.0
    rounds: int = 0
    last_step_size: float = 0.0
    rng: np.random.Generator = field(default_factory=lambda: np.random.default_rng(0))


def learner_init(
    domain: AdmissibleSet, mode: str = "adaptive_convex", rng_seed: int = 0, ftpl_scale: float = 1.0
) -> LearnerState:
    if mode not in MODES:
        raise ValueError(f"unknown learner mode {mode!r}")
    if mode == "ftpl" and domain.kind != "birkhoff":
        raise ValueError("ftpl needs a birkhoff domain")
    x1 = domain.project(np.zeros(domain.dim))
    return LearnerState(
        current_action=x1,
        mode=mode,
        diameter=domain.diameter,
        ftpl_cumulative_gradient=np.zeros(domain.dim) if mode == "ftpl" else None,
        ftpl_scale=float(ftpl_scale),
        rng=np.random.default_rng(rng_seed),
    )


def convex_step_size(diameter: float, past_sq_grad_sum: float) -> float:
    if past_sq_grad_sum <= 0.0:
        return 0.0
    return np.sqrt(2.0) * diameter / (2.0 * np.sqrt(past_sq_grad_sum))


def learner_step(state: LearnerState, feedback: SurrogateFeedback, domain: AdmissibleSet) -> LearnerState:
    """Advance one round in place and return the state holding x_{t+1}."""
    g = np.asarray(feedback.gradient, dtype=float)
    if g.shape != (domain.dim,):
        raise ValueError(f"gradient dimension mismatch: {g.shape} vs ({domain.dim},)")
    if not np.all(np.isfinite(g)):
        raise ValueError("non-finite gradient fed to learner")
    state.rounds += 1
    gsq = float(g @ g)
    if state.mode == "adaptive_convex":
        eta = convex_step_size(state.diameter, state.sq_grad_sum)
        state.sq_grad_sum += gsq
        if eta > 0.0 and gsq > 0.0:
            state.current_action = domain.project(state.current_action - eta * g)
    elif state.mode == "adaptive_strongly_convex":
        h = float(feedback.strong_convexity)
        if h < 0:
            raise ValueError("negative strong convexity")
        state.strong_convexity_sum += h
        state.sq_grad_sum += gsq
        eta = 1.0 / state.strong_convexity_sum if state.strong_convexity_sum > 0 else 0.0
        if eta > 0.0 and gsq > 0.0:
            state.current_action = domain.project(state.current_action - eta * g)
    else:
        state.sq_grad_sum += gsq
        state.ftpl_cumulative_gradient = state.ftpl_cumulative_gradient + g
        noise = state.rng.uniform(0.0, state.ftpl_scale * np.sqrt(state.rounds), size=domain.dim)
        state.current_action = matching_oracle(-(state.ftpl_cumulative_gradient + noise).reshape(domain.n, domain.n))
        eta = 0.0
    state.last_step_size = float(eta)
    return state


def _lexicographic_best(W: np.ndarray, value: float, tol: float) -> np.ndarray:
    # Greedy: fix rows in order, taking the smallest column that can still
    # complete an optimal assignment.
    n = W.shape[0]
    perm = np.empty(n, dtype=int)
    free_cols = list(range(n))
    acc = 0.0
    for i in range(n):
        for j in free_cols:
            rest = [c for c in free_cols if c != j]
            tail = 0.0
            if i + 1 < n:
                sub = W[np.ix_(range(i + 1, n), rest)]
                r, c = linear_sum_assignment(sub, maximize=True)
                tail = float(sub[r, c].sum())
            if acc + W[i, j] + tail >= value - tol:
                perm[i] = j
                acc += W[i, j]
                free_cols = rest
                break
    return perm


def matching_oracle(weights: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    """Maximum-weight permutation matrix, flattened row-major.

    Ties go to the lexicographically smallest permutation, where a
    permutation is read as its row-to-column image sequence.
    """
    W = np.asarray(weights, dtype=float)
    n = W.shape[0]
    if W.shape != (n, n) or n < 1:
        raise ValueError("weights must be a square matrix")
    rows, cols = linear_sum_assignment(W, maximize=True)
    best = float(W[rows, cols].sum())
    scale = tol * max(1.0, float(np.abs(W).max()) * n)
    perm = _lexicographic_best(W, best, scale)
    P = np.zeros((n, n))
    P[np.arange(n), perm] = 1.0
    return P.ravel()
