"""Online constraint satisfaction: queue-weighted surrogates over a base learner."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import FunctionOracle, PolicyTrace, RoundReveal, combine
from .geometry import AdmissibleSet
from .learners import LearnerState, SurrogateFeedback, learner_init, learner_step


class ConsistencyError(AssertionError):
    pass


@dataclass
class QueueState:
    queues: np.ndarray
    running_max: np.ndarray

    @classmethod
    def zeros(cls, k: int) -> "QueueState":
        return cls(np.zeros(k), np.zeros(k))


def queue_update(state: QueueState, violations) -> QueueState:
    v = np.asarray(violations, dtype=float)
    if v.shape != state.queues.shape:
        raise ValueError("violation vector length differs from queue count")
    if not np.all(np.isfinite(v)):
        raise ValueError("non-finite violation")
    q = np.maximum(state.queues + v, 0.0)
    return QueueState(q, np.maximum(state.running_max, q))


def build_ocs_surrogate(state: QueueState, constraints: Sequence[FunctionOracle]) -> FunctionOracle:
    q = state.queues
    if len(constraints) != q.size:
        raise ValueError("constraint count differs from queue count")
    alpha = min(c.strong_convexity for c in constraints)
    h = 2.0 * alpha * float(q.sum()) if alpha > 0 else 0.0
    return combine([(2.0 * qi, g) for qi, g in zip(q, constraints)], strong_convexity=h)


class OcsPolicy:
    """Queue-driven policy for cost-free rounds with k constraint streams."""

    def __init__(self, domain: AdmissibleSet, k: int, mode: str = "adaptive_convex", rng_seed: int = 0,
                 ftpl_scale: float = 1.0):
        self.domain = domain
        self.k = int(k)
        self.learner: LearnerState = learner_init(domain, mode, rng_seed, ftpl_scale)
        self.queue = QueueState.zeros(self.k)
        self.t = 0

    @property
    def action(self) -> np.ndarray:
        return self.learner.current_action

    def round(self, reveal: RoundReveal) -> tuple[np.ndarray, PolicyTrace]:
        if reveal.cost is not None:
            raise ValueError("constraint-satisfaction rounds carry no cost")
        if reveal.k != self.k:
            raise ValueError(f"expected {self.k} constraints, got {reveal.k}")
        self.t += 1
        x = self.learner.current_action
        values = np.array([g.evaluate(x) for g in reveal.constraints])
        grads = [g.subgradient(x) for g in reveal.constraints]
        self.queue = queue_update(self.queue, values)
        q = self.queue.queues
        grad = np.zeros(self.domain.dim)
        for qi, gi in zip(q, grads):
            if qi:
                grad += 2.0 * qi * gi
        alpha = min(g.strong_convexity for g in reveal.constraints)
        h = 2.0 * alpha * float(q.sum()) if alpha > 0 else 0.0
        learner_step(self.learner, SurrogateFeedback(grad, h), self.domain)
        trace = PolicyTrace(
            t=self.t,
            action=x,
            cost_value=0.0,
            constraint_values=values,
            queue_vector=q.copy(),
            step_size=self.learner.last_step_size,
            surrogate_grad_norm=float(np.linalg.norm(grad)),
            surrogate_strong_convexity=h,
            constraint_grad_norms=np.array([np.linalg.norm(gi) for gi in grads]),
        )
        return self.learner.current_action, trace


def ocs_round(policy: OcsPolicy, reveal: RoundReveal) -> tuple[np.ndarray, PolicyTrace]:
    return policy.round(reveal)


def max_subinterval_sums(values: np.ndarray) -> np.ndarray:
    """Per-column maximum over subintervals of the sum, floored at 0 (Kadane)."""
    V = np.atleast_2d(np.asarray(values, dtype=float))
    best = np.zeros(V.shape[1])
    run = np.zeros(V.shape[1])
    for row in V:
        run = np.maximum(run + row, row)
        best = np.maximum(best, run)
    return best


def max_violation(trace: Sequence[PolicyTrace], tol: float = 1e-9) -> np.ndarray:
    """Cumulative violation per constraint, computed two ways and cross-checked."""
    if not trace:
        raise ValueError("empty trace")
    G = np.array([r.constraint_values for r in trace])
    Q = np.array([r.queue_vector for r in trace])
    scan = max_subinterval_sums(G)
    lindley = Q.max(axis=0)
    scale = np.maximum(1.0, np.abs(G).sum(axis=0))
    if np.any(np.abs(scan - lindley) > tol * scale):
        raise ConsistencyError(f"queue running max {lindley} differs from max subinterval sum {scan}")
    return lindley
