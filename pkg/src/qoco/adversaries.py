"""Reproducible adversarial streams.

An adversary sees the action x_t before revealing the round's constraints
(and cost, when one is attached). Every scenario has a hidden point that
is feasible by construction, either per round or over every window of S
consecutive rounds, together with declared gradient and magnitude bounds
that the certificate checks rely on.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np

from .core import FunctionOracle, RoundReveal, constant, linear, quadratic
from .geometry import AdmissibleSet

SCENARIOS = ("hidden_set", "multi_task", "strongly_convex", "s_feasible", "alternating_linear", "custom_scripted")
COSTS = ("none", "random_linear", "random_quadratic", "alternating_linear", "regret_sign")
FEAS_TOL = 1e-9


@dataclass(frozen=True)
class AdversaryConfig:
    scenario: str = "hidden_set"
    k: int = 1
    hidden_point: Optional[tuple] = None
    hidden_radius: float = 0.0
    alpha: float = 1.0
    push: float = 1.0
    S: int = 1
    beta: float = 0.5
    levels: tuple = (0.0, 1.0)
    cost: str = "none"
    cost_alpha: float = 0.0
    cost_push: float = 1.0
    anchor: Optional[tuple] = None
    rng_seed: int = 0
    script: Optional[Callable] = field(default=None, compare=False)

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ValueError(f"unknown scenario {self.scenario!r}")
        if self.cost not in COSTS:
            raise ValueError(f"unknown cost stream {self.cost!r}")
        if self.k < 1 or self.S < 1:
            raise ValueError("k and S must be positive")
        if self.scenario == "custom_scripted" and self.script is None:
            raise ValueError("custom_scripted needs a script callable")


def _unit(v: np.ndarray, fallback: np.ndarray) -> np.ndarray:
    n = float(np.linalg.norm(v))
    return v / n if n > 1e-15 else fallback


class Adversary:
    """Stateful stream generator; build with :func:`make_adversary`."""

    def __init__(self, config: AdversaryConfig, domain: AdmissibleSet):
        self.config = config
        self.domain = domain
        self.rng = np.random.default_rng(config.rng_seed)
        d = domain.dim
        hp = config.hidden_point
        if hp is None:
            hp = self._default_hidden_point()
        self.hidden_point = np.asarray(hp, dtype=float).reshape(d)
        if not domain.contains(self.hidden_point):
            raise ValueError("hidden point must lie in the admissible set")
        self.anchor = self.hidden_point if config.anchor is None else np.asarray(config.anchor, dtype=float)
        self._e1 = np.eye(d)[0]
        D = domain.diameter
        sc = config.scenario
        if sc == "hidden_set":
            self.constraint_grad_bound, self.F = 1.0, max(D, 1.0)
        elif sc == "multi_task":
            self.constraint_grad_bound, self.F = 1.0, D
        elif sc == "strongly_convex":
            self.constraint_grad_bound = config.push + config.alpha * D
            self.F = 0.5 * config.alpha * D * D + config.push * D
        elif sc == "s_feasible":
            self.constraint_grad_bound, self.F = 1.0, D + config.beta
        elif sc == "alternating_linear":
            self.constraint_grad_bound = 1.0
            self.F = D + max(abs(v) for v in config.levels) + float(np.abs(self.hidden_point[0]))
        else:
            self.constraint_grad_bound, self.F = np.inf, np.inf
        c = config.cost
        if c == "none":
            self.cost_grad_bound = 0.0
        elif c in ("random_linear", "alternating_linear"):
            self.cost_grad_bound = 1.0
        elif c == "random_quadratic":
            self.cost_grad_bound = config.cost_alpha * D
        else:
            self.cost_grad_bound = config.cost_push + 2.0 * config.cost_alpha * D
        self._pattern = self._window_pattern()
        self.t = 0

    @property
    def feasibility(self) -> str:
        return "s_window" if self.config.scenario == "s_feasible" else "per_round"

    @property
    def S(self) -> int:
        return self.config.S if self.config.scenario == "s_feasible" else 1

    @property
    def G(self) -> float:
        """Twice the largest declared gradient norm, the usual normalization."""
        return 2.0 * max(self.constraint_grad_bound, self.cost_grad_bound)

    @property
    def cost_strong_convexity(self) -> float:
        return self.config.cost_alpha if self.config.cost in ("random_quadratic", "regret_sign") else 0.0

    def _default_hidden_point(self) -> np.ndarray:
        # Seed-dependent, drawn from the inner half of the set.
        dom = self.domain
        rng = np.random.default_rng([self.config.rng_seed, 1])
        if dom.kind == "box":
            mid = 0.5 * (dom.lo + dom.hi)
            return mid + 0.5 * rng.uniform(-0.5, 0.5, dom.dim) * (dom.hi - dom.lo)
        if dom.kind == "ball":
            return dom.center + 0.5 * (AdmissibleSet.ball(np.zeros(dom.dim), dom.radius).sample(rng))
        if dom.kind == "simplex":
            return np.eye(dom.dim)[0]
        return np.eye(dom.n).ravel()

    def _window_pattern(self) -> np.ndarray:
        S = self.config.S
        half = S // 2
        return np.concatenate([np.full(half, self.config.beta), np.full(half, -self.config.beta), np.zeros(S - 2 * half)])

    def reveal(self, t: int, x: np.ndarray) -> RoundReveal:
        if t != self.t + 1:
            raise ValueError(f"rounds must be consecutive: expected {self.t + 1}, got {t}")
        self.t = t
        x = np.asarray(x, dtype=float)
        cfg = self.config
        if cfg.scenario == "custom_scripted":
            return cfg.script(t, x, self.rng)
        constraints = self._constraints(t, x)
        cost = self._cost(t, x)
        return RoundReveal(tuple(constraints), cost)

    def _constraints(self, t: int, x: np.ndarray) -> list[FunctionOracle]:
        cfg = self.config
        p = self.hidden_point
        d = self.domain.dim
        sc = cfg.scenario
        if sc == "hidden_set":
            r = cfg.hidden_radius
            dist = float(np.linalg.norm(x - p))
            if dist <= r + FEAS_TOL:
                return [constant(-1.0)] * cfg.k
            u = (x - p) / dist
            surface = p + r * u
            return [linear(u, -float(u @ surface), lipschitz=1.0)] * cfg.k
        if sc == "multi_task":
            out = []
            for _ in range(cfg.k):
                a = _unit(self.rng.standard_normal(d), self._e1)
                if a @ (x - p) < 0:
                    a = -a
                out.append(linear(a, -float(a @ p), lipschitz=1.0))
            return out
        if sc == "strongly_convex":
            u = _unit(x - p, self._e1)
            return [
                quadratic(curvature=cfg.alpha, center=p, linear=cfg.push * u, offset=-cfg.push * float(u @ p))
            ] * cfg.k
        if sc == "s_feasible":
            b = self._pattern[(t - 1) % cfg.S]
            out = []
            for _ in range(cfg.k):
                a = _unit(self.rng.standard_normal(d), self._e1)
                if a @ (x - p) < 0:
                    a = -a
                out.append(linear(a, b - float(a @ p), lipschitz=1.0))
            return out
        # alternating_linear
        level = cfg.levels[(t - 1) % len(cfg.levels)]
        return [linear(self._e1, -float(level), lipschitz=1.0)] * cfg.k

    def _cost(self, t: int, x: np.ndarray) -> Optional[FunctionOracle]:
        cfg = self.config
        d = self.domain.dim
        if cfg.cost == "none":
            return None
        if cfg.cost == "random_linear":
            return linear(_unit(self.rng.standard_normal(d), self._e1))
        if cfg.cost == "alternating_linear":
            return linear((1.0 if t % 2 == 1 else -1.0) * self._e1)
        if cfg.cost == "random_quadratic":
            z = self.domain.sample(self.rng)
            return quadratic(curvature=cfg.cost_alpha, center=z, lipschitz=self.cost_grad_bound)
        # regret_sign: the anchor never does worse than the played action
        a = self.anchor
        c = cfg.cost_push * _unit(x - a, np.zeros(d)) + cfg.cost_alpha * (x - a)
        return quadratic(
            curvature=cfg.cost_alpha, center=x, linear=c, offset=-float(c @ x), lipschitz=self.cost_grad_bound
        )


def make_adversary(config: AdversaryConfig, domain: AdmissibleSet) -> Adversary:
    return Adversary(config, domain)


def regret_sign_controller(base: AdversaryConfig, alpha: float = 0.0, push: float = 1.0) -> AdversaryConfig:
    """Attach costs that keep the worst-case regret nonnegative.

    Each round the cost is <c_t, x - x_t> + alpha/2 ||x - x_t||^2 with c_t
    pointing from the anchor to x_t, so the anchor's cost is never above the
    played action's. With a feasible anchor the worst-case regret is then
    nonnegative at every horizon.
    """
    return replace(base, cost="regret_sign", cost_alpha=float(alpha), cost_push=float(push))


def certify_feasibility(
    config: AdversaryConfig, stream: Sequence[RoundReveal], x_candidate, S: Optional[int] = None
) -> bool:
    x = np.asarray(x_candidate, dtype=float)
    G = np.array([[g.evaluate(x) for g in r.constraints] for r in stream])
    if config.scenario != "s_feasible":
        return bool(np.all(G <= FEAS_TOL))
    S = config.S if S is None else S
    if len(G) < S:
        return True  # no complete window yet
    csum = np.vstack([np.zeros(G.shape[1]), np.cumsum(G, axis=0)])
    windows = csum[S:] - csum[:-S]
    return bool(np.all(windows <= FEAS_TOL))


def magnitude_certificate(adv: Adversary, stream: Sequence[RoundReveal], n_samples: int = 1000, rng_seed: int = 0) -> bool:
    """Check |g(x)| <= F on sampled points of the admissible set."""
    rng = np.random.default_rng(rng_seed)
    X = np.array([adv.domain.sample(rng) for _ in range(n_samples)])
    for r in stream:
        for g in r.constraints:
            if np.any(np.abs(g.evaluate_many(X)) > adv.F + FEAS_TOL):
                return False
    return True
