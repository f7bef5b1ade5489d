"""Input-queued switch driven by the constraint-satisfaction policy.

Each round the policy proposes a doubly stochastic matrix x(t). A matching
z(t) is drawn from its Birkhoff-von Neumann decomposition so that
E z(t) = x(t), and the N^2 physical queues evolve as
Q_ij <- (Q_ij + b_ij - s_ij z_ij)^+. The policy's own virtual queues use the
fractional x(t) through the constraints g_ij(x) = b_ij - s_ij x_ij.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .core import FunctionOracle, RoundReveal
from .geometry import AdmissibleSet
from .learners import matching_oracle
from .ocs import OcsPolicy

SUPPORT_TOL = 1e-10
RESIDUAL_TOL = 1e-9


class DecompositionError(RuntimeError):
    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (residual {residual:.3e})")
        self.residual = residual


@dataclass
class BvnDecomposition:
    weights: np.ndarray
    permutations: np.ndarray  # (m, N) column image of each row
    residual_norm: float = 0.0

    @property
    def n(self) -> int:
        return self.permutations.shape[1]

    def matrices(self) -> np.ndarray:
        m, n = self.permutations.shape
        P = np.zeros((m, n, n))
        for c, perm in enumerate(self.permutations):
            P[c, np.arange(n), perm] = 1.0
        return P

    def reconstruct(self) -> np.ndarray:
        return np.tensordot(self.weights, self.matrices(), axes=1)


def _sinkhorn(M: np.ndarray, tol: float = 1e-15, max_iter: int = 1000) -> np.ndarray:
    for _ in range(max_iter):
        M = M / M.sum(axis=1, keepdims=True)
        M = M / M.sum(axis=0, keepdims=True)
        if np.max(np.abs(M.sum(axis=1) - 1.0)) <= tol:
            break
    return M


def bvn_decompose(x, n: Optional[int] = None) -> BvnDecomposition:
    """Greedy Birkhoff-von Neumann decomposition.

    Repeatedly finds a perfect matching inside the support and removes it
    with the smallest matched entry as its weight. Each removal moves to a
    strictly smaller face of the polytope, so at most (N-1)^2 + 1
    components are produced.
    """
    X = np.asarray(x, dtype=float)
    if n is None:
        n = int(round(np.sqrt(X.size)))
    X = X.reshape(n, n)
    rs, cs = X.sum(axis=1), X.sum(axis=0)
    if np.max(np.abs(rs - 1)) > 1e-6 or np.max(np.abs(cs - 1)) > 1e-6 or X.min() < -1e-8:
        raise ValueError("input is not doubly stochastic within 1e-6")
    R = _sinkhorn(np.maximum(X, 0.0))
    weights, perms = [], []
    rows = np.arange(n)
    max_components = (n - 1) ** 2 + 1
    while R.max() > RESIDUAL_TOL:
        mask = (R > SUPPORT_TOL).astype(float)
        r, c = linear_sum_assignment(mask, maximize=True)
        if mask[r, c].sum() < n:
            raise DecompositionError("no perfect matching on the support", float(R.max()))
        w = float(R[rows, c].min())
        weights.append(w)
        perms.append(c.copy())
        R[rows, c] -= w
        R[R <= SUPPORT_TOL] = 0.0
        if len(weights) > max_components:
            raise DecompositionError("too many components", float(R.max()))
    W = np.array(weights)
    W = W / W.sum()
    dec = BvnDecomposition(W, np.array(perms, dtype=int))
    dec.residual_norm = float(np.abs(dec.reconstruct() - X).max())
    return dec


def sample_matching(dec: BvnDecomposition, rng: np.random.Generator) -> np.ndarray:
    i = min(int(np.searchsorted(np.cumsum(dec.weights), rng.random(), side="right")), len(dec.weights) - 1)
    P = np.zeros((dec.n, dec.n))
    P[np.arange(dec.n), dec.permutations[i]] = 1.0
    return P


def maxweight_baseline(queues, services) -> np.ndarray:
    W = np.asarray(queues, dtype=float) * np.asarray(services, dtype=float)
    n = W.shape[0]
    return matching_oracle(W).reshape(n, n)


def switch_constraints(b: np.ndarray, s: np.ndarray) -> tuple[FunctionOracle, ...]:
    """g_ij(x) = b_ij - s_ij x_ij over the flattened matrix."""
    n = b.shape[0]
    out = []
    for i in range(n):
        for j in range(n):
            idx = i * n + j
            bij, sij = float(b[i, j]), float(s[i, j])
            grad = np.zeros(n * n)
            grad[idx] = -sij

            def value(x, idx=idx, bij=bij, sij=sij):
                x = np.asarray(x, dtype=float)
                return bij - sij * x[..., idx]

            def gradient(x, grad=grad):
                return np.broadcast_to(grad, np.shape(x)).copy()

            out.append(FunctionOracle(value, gradient, 0.0, abs(sij)))
    return tuple(out)


@dataclass
class SwitchState:
    n: int
    queues: np.ndarray
    t: int = 0
    x: Optional[np.ndarray] = None
    z: Optional[np.ndarray] = None
    rng: np.random.Generator = field(default_factory=lambda: np.random.default_rng(0))


class SwitchSim:
    def __init__(self, n: int, mode: str = "adaptive_convex", rng_seed: int = 0, ftpl_scale: float = 1.0,
                 policy: str = "ocs"):
        if policy not in ("ocs", "maxweight"):
            raise ValueError(f"unknown switch policy {policy!r}")
        self.domain = AdmissibleSet.birkhoff(n)
        self.policy_kind = policy
        ss = np.random.SeedSequence(rng_seed)
        policy_seed, sample_seed = (int(v) for v in ss.generate_state(2))
        self.policy = OcsPolicy(self.domain, n * n, mode, policy_seed, ftpl_scale) if policy == "ocs" else None
        self.state = SwitchState(n, np.zeros((n, n)), rng=np.random.default_rng(sample_seed))

    def switch_round(self, b, s):
        st = self.state
        n = st.n
        b = np.asarray(b, dtype=float).reshape(n, n)
        s = np.asarray(s, dtype=float).reshape(n, n)
        if np.any(b < 0) or np.any(s < 0):
            raise ValueError("arrivals and services must be nonnegative")
        st.t += 1
        if self.policy is None:
            z = maxweight_baseline(st.queues, s)
            x = z.ravel()
            record = None
        else:
            x = self.policy.action
            z = sample_matching(bvn_decompose(x, n), st.rng)
            _, record = self.policy.round(RoundReveal(switch_constraints(b, s)))
        st.queues = np.maximum(st.queues + b - s * z, 0.0)
        st.x, st.z = x, z
        return st, record


@dataclass(frozen=True)
class SwitchAdversary:
    """Arrivals matched to a hidden permutation: b = s * P with random 0/1 services.

    With ``full_load`` the hidden permutation's links are served every round,
    so each of those links receives one packet per round and the switch runs
    at capacity.
    """

    n: int
    rng_seed: int = 0
    service_prob: float = 0.5
    full_load: bool = True

    def stream(self, T: int):
        rng = np.random.default_rng(self.rng_seed)
        perm = rng.permutation(self.n)
        P = np.zeros((self.n, self.n))
        P[np.arange(self.n), perm] = 1.0
        for _ in range(T):
            s = (rng.random((self.n, self.n)) < self.service_prob).astype(float)
            if self.full_load:
                s = np.maximum(s, P)
            yield s * P, s

    def hidden_point(self) -> np.ndarray:
        rng = np.random.default_rng(self.rng_seed)
        perm = rng.permutation(self.n)
        P = np.zeros((self.n, self.n))
        P[np.arange(self.n), perm] = 1.0
        return P


def load_arrival_csv(path, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Read rows (t, i, j, b, s) with 1-based t and 0-based ports."""
    path = Path(path)
    rows = []
    with path.open(newline="") as fh:
        for row in csv.DictReader(fh):
            rows.append((int(row["t"]), int(row["i"]), int(row["j"]), float(row["b"]), float(row["s"])))
    if not rows:
        raise ValueError(f"{path}: no rows")
    T = max(r[0] for r in rows)
    B = np.zeros((T, n, n))
    S = np.zeros((T, n, n))
    for t, i, j, bv, sv in rows:
        B[t - 1, i, j] = bv
        S[t - 1, i, j] = sv
    return B, S


def run_switch(sim: SwitchSim, arrivals: Sequence, record_every: int = 1) -> np.ndarray:
    """Run a full arrival stream; returns max_ij Q_ij(t) per round."""
    out = []
    for b, s in arrivals:
        st, _ = sim.switch_round(b, s)
        out.append(st.queues.max())
    return np.array(out)
