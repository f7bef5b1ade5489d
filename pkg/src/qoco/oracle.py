"""Brute-force ground truth: grid optima, regret series and recursion checks.

Everything here works from recorded data. The grid optimum is an
over-estimate of the true constrained minimum (grid points are a subset of
the set), so grid-measured regret never exceeds the true worst-case regret.
Upper-bound certificates checked against it are therefore sound; the grid
slack eps_grid is still reported and added where a criterion asks for it.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np
from scipy.optimize import brentq

from .core import FunctionOracle, PolicyTrace
from .geometry import AdmissibleSet

FEAS_TOL = 1e-9
FEASIBILITY_MODES = ("ignore", "per_round", "s_window")
CERTIFICATES = ("q_ineq", "q_str_cvx", "main_eq", "gronwall_ineq", "gen_reg_decomp")


class InfeasibleGridError(RuntimeError):
    def __init__(self, round_index: int):
        super().__init__(f"no grid point remains feasible after round {round_index}")
        self.round_index = round_index


class HypothesisNotMet(ValueError):
    pass


def _lex_sorted_unique(P: np.ndarray) -> np.ndarray:
    P = np.round(P, 12) + 0.0
    P = np.unique(P, axis=0)
    return P[np.lexsort(P.T[::-1])]


@dataclass
class GridSpec:
    domain: AdmissibleSet
    points_per_dimension: int = 41
    extra_points: Sequence = ()
    n_birkhoff_samples: int = 64
    rng_seed: int = 0
    points: np.ndarray = field(init=False)
    covering_radius: float = field(init=False)

    def __post_init__(self):
        if self.points_per_dimension < 2:
            raise ValueError("need at least 2 points per dimension")
        dom, m = self.domain, self.points_per_dimension
        if dom.kind in ("box", "ball"):
            lo = dom.lo if dom.kind == "box" else dom.center - dom.radius
            hi = dom.hi if dom.kind == "box" else dom.center + dom.radius
            axes = [np.linspace(a, b, m) for a, b in zip(lo, hi)]
            P = np.array(list(itertools.product(*axes)))
            if dom.kind == "ball":
                P = np.array([dom.project(p) for p in P])
            cell = (hi - lo) / (m - 1)
            self.covering_radius = float(np.linalg.norm(cell)) if dom.kind == "ball" else 0.5 * float(np.linalg.norm(cell))
        elif dom.kind == "simplex":
            n = m - 1
            P = np.array([c for c in itertools.product(range(n + 1), repeat=dom.dim) if sum(c) == n], dtype=float) / n
            self.covering_radius = float(np.sqrt(dom.dim)) / n
        else:
            N = dom.n
            verts = []
            for perm in itertools.permutations(range(N)):
                M = np.zeros((N, N))
                M[np.arange(N), perm] = 1.0
                verts.append(M.ravel())
            rng = np.random.default_rng(self.rng_seed)
            samples = [dom.sample(rng) for _ in range(self.n_birkhoff_samples)]
            P = np.array(verts + samples)
            # Only the vertices are guaranteed; no useful covering bound.
            self.covering_radius = dom.diameter
        if len(self.extra_points):
            P = np.vstack([P, np.atleast_2d(np.asarray(self.extra_points, dtype=float))])
        self.points = _lex_sorted_unique(P)

    def eps_grid(self, lipschitz: float) -> float:
        """Per-round optimum slack: covering radius times a Lipschitz bound."""
        return float(lipschitz) * self.covering_radius

    def index_of(self, x) -> int:
        d = np.linalg.norm(self.points - np.asarray(x, dtype=float), axis=1)
        i = int(np.argmin(d))
        if d[i] > 1e-9:
            raise KeyError("point is not on the grid")
        return i


class RegretTracker:
    """Streaming cumulative costs on the grid, one round at a time."""

    def __init__(self, grid: GridSpec, feasibility: str = "per_round", S: int = 1, k: int = 1,
                 probes: Sequence = ()):
        if feasibility not in FEASIBILITY_MODES:
            raise ValueError(f"unknown feasibility mode {feasibility!r}")
        self.grid = grid
        self.P = grid.points
        n = len(self.P)
        self.feasibility = feasibility
        self.S = int(S)
        self.k = int(k)
        self.cum_cost = np.zeros(n)
        self.cum_surrogate = np.zeros(n)
        self.feasible = np.ones(n, dtype=bool)
        self.ring = np.zeros((self.S, n, self.k))
        self.window = np.zeros((n, self.k))
        self.probes = [grid.index_of(p) for p in probes]
        self.t = 0
        self.policy_cost = 0.0
        self.policy_surrogate = 0.0
        self.killed_at: Optional[int] = None

    def update(self, x: np.ndarray, cost: Optional[FunctionOracle], constraints: Sequence[FunctionOracle],
               surrogate: Optional[FunctionOracle] = None, surrogate_weights: Optional[tuple] = None) -> None:
        """Add one round.

        ``surrogate_weights = (w_cost, w_constraints, clip)`` describes a
        surrogate w_cost * f + sum_i w_i * g_i (with g clipped at 0 when
        ``clip``) and reuses the grid values already computed for f and g.
        """
        self.t += 1
        fv = None
        if cost is not None:
            fv = cost.evaluate_many(self.P)
            self.cum_cost += fv
            self.policy_cost += cost.evaluate(x)
        G = None
        if self.feasibility != "ignore" or surrogate_weights is not None:
            G = np.stack([g.evaluate_many(self.P) for g in constraints], axis=1)
        if surrogate_weights is not None:
            wc, wg, clip = surrogate_weights
            Gs = np.maximum(G, 0.0) if clip else G
            sv = Gs @ np.asarray(wg, dtype=float)
            px = np.array([g.evaluate(x) for g in constraints])
            ps = float((np.maximum(px, 0.0) if clip else px) @ np.asarray(wg, dtype=float))
            if wc:
                sv = sv + wc * fv
                ps += wc * cost.evaluate(x)
            self.cum_surrogate += sv
            self.policy_surrogate += ps
        elif surrogate is not None:
            self.cum_surrogate += surrogate.evaluate_many(self.P)
            self.policy_surrogate += surrogate.evaluate(x)
        if self.feasibility == "ignore":
            return
        if self.feasibility == "per_round":
            self.feasible &= np.all(G <= FEAS_TOL, axis=1)
        else:
            slot = (self.t - 1) % self.S
            self.window += G - self.ring[slot]
            self.ring[slot] = G
            if self.t >= self.S:
                self.feasible &= np.all(self.window <= FEAS_TOL, axis=1)
        if self.killed_at is None and not np.any(self.feasible):
            self.killed_at = self.t

    def best(self) -> tuple[int, float]:
        if self.killed_at is not None:
            raise InfeasibleGridError(self.killed_at)
        vals = np.where(self.feasible, self.cum_cost, np.inf)
        i = int(np.argmin(vals))
        return i, float(vals[i])

    def regret(self) -> float:
        return self.policy_cost - self.best()[1]

    def surrogate_regret(self) -> float:
        """Surrogate regret against the whole grid, with no feasibility filter."""
        return self.policy_surrogate - float(self.cum_surrogate.min())

    def surrogate_regret_at(self, i: int) -> float:
        return self.policy_surrogate - float(self.cum_surrogate[i])


@dataclass
class RegretSeries:
    regret: np.ndarray
    surrogate_regret: np.ndarray
    surrogate_regret_at_best: np.ndarray
    surrogate_regret_at_probes: np.ndarray
    best_value: np.ndarray
    eps_grid: float = 0.0


def offline_optimum(
    costs: Sequence[Optional[FunctionOracle]],
    constraints: Sequence[Sequence[FunctionOracle]],
    grid: GridSpec,
    feasibility: str = "per_round",
    S: int = 1,
) -> tuple[np.ndarray, float]:
    k = len(constraints[0]) if len(constraints) else 1
    tr = RegretTracker(grid, feasibility, S, k)
    for f, gs in zip(costs, constraints):
        tr.update(grid.points[0], f, gs)
    i, v = tr.best()
    return grid.points[i].copy(), v


def measured_regret(
    trace: Sequence[PolicyTrace],
    costs: Sequence[FunctionOracle],
    constraints: Sequence[Sequence[FunctionOracle]],
    grid: GridSpec,
    feasibility: str = "per_round",
    S: int = 1,
    lipschitz: float = 0.0,
) -> RegretSeries:
    k = len(constraints[0])
    tr = RegretTracker(grid, feasibility, S, k)
    reg, best = [], []
    for rec, f, gs in zip(trace, costs, constraints):
        tr.update(rec.action, f, gs)
        i, v = tr.best()
        reg.append(tr.policy_cost - v)
        best.append(v)
    n = len(reg)
    z = np.zeros(n)
    return RegretSeries(np.array(reg), z, z.copy(), np.zeros((n, 0)), np.array(best), grid.eps_grid(lipschitz))


# Growth bound for nonnegative sequences with
#   Q(t)^2 <= c * sum_{tau<=t} Q(tau)^2 / sum_{s<=tau} Q(s).
# Dividing by c reduces to c = 1, so checks run on Q / c.


@dataclass
class Prop1Result:
    ok: bool
    hypothesis_ok: bool
    sqrt_bound_ok: bool
    log_bound_ok: bool
    c1: float
    fitted_slack: float
    first_positive: int
    sequence: np.ndarray


def equality_greedy_sequence(c: float, T: int, q1: float = 1.0) -> np.ndarray:
    """Largest sequence meeting the recursion with equality at every round."""
    if not (c > 0 and q1 > 0):
        raise ValueError("need c > 0 and Q(1) > 0")
    if q1 > c:
        raise HypothesisNotMet("Q(1) > c violates the first-round inequality")
    Q = np.empty(T)
    Q[0] = q1
    S = q1
    A = q1 * q1 / S
    for t in range(1, T):
        # Solve q^2 (1 - c / (S + q)) = c A for the positive root.
        def h(q, S=S, A=A):
            return q * q * (1.0 - c / (S + q)) - c * A

        lo = max(0.0, c - S)
        hi = max(2.0 * lo, 1.0)
        while h(hi) <= 0:
            hi *= 2.0
        q = brentq(h, lo, hi, xtol=1e-12, rtol=1e-15)
        Q[t] = q
        S += q
        A += q * q / S
    return Q


def sequence_hypothesis_violations(Q: np.ndarray, c: float, rtol: float = 1e-9) -> np.ndarray:
    """Rounds (1-based) where the recursion hypothesis fails."""
    Q = np.asarray(Q, dtype=float)
    S = np.cumsum(Q)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(S > 0, Q * Q / S, 0.0)
    rhs = c * np.cumsum(terms)
    lhs = Q * Q
    bad = lhs > rhs * (1 + rtol) + 1e-12
    return np.nonzero(bad)[0] + 1


def verify_proposition1(c: float, sequence_gen: str = "equality_greedy", T: int = 100_000,
                        q1: float = 1.0, recorded: Optional[np.ndarray] = None) -> Prop1Result:
    if not c > 0:
        raise ValueError("c must be positive")
    if sequence_gen == "equality_greedy":
        Q = equality_greedy_sequence(c, T, q1)
    elif sequence_gen == "recorded":
        if recorded is None:
            raise ValueError("recorded mode needs a sequence")
        Q = np.asarray(recorded, dtype=float)
    else:
        raise ValueError(f"unknown sequence generator {sequence_gen!r}")
    pos = np.nonzero(Q > 0)[0]
    if len(pos) == 0:
        return Prop1Result(True, True, True, True, 0.0, 0.0, 0, Q)
    first = int(pos[0])
    bad = sequence_hypothesis_violations(Q, c)
    if sequence_gen == "recorded" and len(bad):
        raise HypothesisNotMet(f"recursion hypothesis fails at round {int(bad[0])} with c={c}")
    hyp_ok = len(bad) == 0
    Qn = Q[first:] / c
    t = np.arange(1, len(Qn) + 1, dtype=float)
    c1 = 1.0 - np.log(Qn[0])
    sqrt_ok = bool(np.all(Qn <= np.sqrt(t) * (1 + 1e-12)))
    late = t >= 3
    bound = np.log(t[late]) + 2.0 * np.log(np.maximum(np.log(t[late]), 1.0)) + c1
    excess = Qn[late] - bound
    slack = float(max(0.0, excess.max())) if excess.size else 0.0
    log_ok = bool(np.all(excess <= 1e-9))
    return Prop1Result(hyp_ok and sqrt_ok and log_ok, hyp_ok, sqrt_ok, log_ok, float(c1), slack, first + 1, Q)


@dataclass
class CertificateInputs:
    """Per-round arrays a certificate may need, all of length t."""

    Q: np.ndarray
    surrogate_grad_norm: Optional[np.ndarray] = None
    regret: Optional[np.ndarray] = None
    surrogate_regret_at_best: Optional[np.ndarray] = None
    surrogate_regret_at_hidden: Optional[np.ndarray] = None


def certificate_inputs(trace: Sequence[PolicyTrace], series: Optional[RegretSeries] = None,
                       hidden_probe: int = 0) -> CertificateInputs:
    Q = np.array([r.queue_vector for r in trace])
    gn = np.array([r.surrogate_grad_norm for r in trace])
    if series is None:
        return CertificateInputs(Q, gn)
    at_hidden = series.surrogate_regret_at_probes[:, hidden_probe] if series.surrogate_regret_at_probes.size else None
    return CertificateInputs(Q, gn, series.regret, series.surrogate_regret_at_best, at_hidden)


def _need(x, name):
    if x is None:
        raise ValueError(f"certificate needs {name} in the trace data")
    return x


def verify_recursion_certificates(data: CertificateInputs, which: str, *, G: float, D: float = 0.0,
                                  alpha: float = 0.0, V: float = 0.0, F: float = 0.0, S: int = 1,
                                  eps: float = 0.0, rtol: float = 1e-9) -> np.ndarray:
    """Evaluate one recursion inequality at every round; returns violating rounds (1-based)."""
    if which not in CERTIFICATES:
        raise ValueError(f"unknown certificate {which!r}")
    Q = np.atleast_2d(np.asarray(data.Q, dtype=float))
    if Q.shape[0] == 1 and Q.shape[1] > 1 and which in ("main_eq", "gronwall_ineq"):
        Q = Q.T
    T, k = Q.shape
    t = np.arange(1, T + 1, dtype=float)
    qsq = np.sum(Q * Q, axis=1)
    if which == "q_ineq":
        lhs = qsq
        rhs = G * D * np.sqrt(2 * k) * np.sqrt(np.cumsum(qsq))
    elif which == "q_str_cvx":
        denom = np.cumsum(Q.sum(axis=1))
        with np.errstate(divide="ignore", invalid="ignore"):
            terms = np.where(denom > 0, qsq / denom, 0.0)
        lhs = qsq
        rhs = k * G * G / (4.0 * alpha) * np.cumsum(terms)
    elif which == "main_eq":
        reg = _need(data.regret, "regret")
        lhs = qsq + V * reg
        rhs = 2 * G * D * np.sqrt(np.cumsum(qsq)) + 2 * G * D * V * np.sqrt(t) + V * eps * t
    elif which == "gronwall_ineq":
        reg = _need(data.regret, "regret")
        harmonic = np.cumsum(1.0 / t)
        lhs = qsq + V * reg
        rhs = V * G * G / alpha * harmonic + G * G / (alpha * V) * np.cumsum(qsq / t) + V * eps * t
    else:
        rp = _need(data.surrogate_regret_at_hidden, "surrogate regret at the hidden point")
        lhs = qsq
        rhs = rp + 2 * k * F * F * S * t + 2 * F * S * Q.sum(axis=1) + 4 * F * F * S * S * k
    bad = lhs > rhs + rtol * np.maximum(1.0, np.abs(rhs))
    return np.nonzero(bad)[0] + 1


def convex_regret_bound(grad_norms: np.ndarray, D: float) -> np.ndarray:
    return np.sqrt(2.0) * D * np.sqrt(np.cumsum(np.asarray(grad_norms) ** 2))


def strongly_convex_regret_bound(grad_norms: np.ndarray, H: np.ndarray) -> np.ndarray:
    Hs = np.cumsum(np.asarray(H, dtype=float))
    g2 = np.asarray(grad_norms, dtype=float) ** 2
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(Hs > 0, g2 / Hs, np.where(g2 > 0, np.inf, 0.0))
    return 0.5 * np.cumsum(terms)


def learner_certificate_violations(trace: Sequence[PolicyTrace], surrogate_regret: np.ndarray, D: float,
                                   mode: str, eps: float = 0.0, rtol: float = 1e-9) -> np.ndarray:
    gn = np.array([r.surrogate_grad_norm for r in trace])
    if mode == "adaptive_convex":
        bound = convex_regret_bound(gn, D)
    elif mode == "adaptive_strongly_convex":
        bound = strongly_convex_regret_bound(gn, np.array([r.surrogate_strong_convexity for r in trace]))
    else:
        raise ValueError(f"no regret certificate for mode {mode!r}")
    bound = bound + eps
    bad = surrogate_regret > bound + rtol * np.maximum(1.0, np.abs(bound))
    return np.nonzero(bad)[0] + 1
