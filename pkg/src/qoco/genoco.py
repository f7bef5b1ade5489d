"""Generalized OCO: one long-term constraint alongside adversarial costs.

Each round the constraint is clipped at zero, a single queue accumulates
the clipped violation, and the base learner sees V * cost + 2 Q * clipped
constraint. Two variants sit on top of the plain recursion: a damped queue
that leaks a 1/(1 + alpha) fraction per round, and phase restarts that
reset everything once the policy beats every feasible fixed action.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import FunctionOracle, PolicyTrace, ProblemParams, RoundReveal, combine
from .geometry import AdmissibleSet
from .learners import SurrogateFeedback, learner_init, learner_step

VARIANTS = ("plain", "theta_damped", "phase_restart")


class ConfigurationError(ValueError):
    pass


class InfeasiblePhaseError(RuntimeError):
    pass


def clip_constraint(g: FunctionOracle) -> FunctionOracle:
    def value(x):
        return np.maximum(np.asarray(g.value(x), dtype=float), 0.0)

    def grad(x):
        x = np.asarray(x, dtype=float)
        gv = np.asarray(g.value(x), dtype=float)
        gg = np.asarray(g.grad(x), dtype=float)
        if x.ndim == 1:
            return gg if gv >= 0 else np.zeros_like(gg)
        return np.where((gv >= 0)[:, None], gg, 0.0)

    return FunctionOracle(value, grad, strong_convexity=0.0, lipschitz=g.lipschitz)


def choose_V(params: ProblemParams, cost_mode: str = "convex") -> float:
    if params.V is not None:
        return float(params.V)
    if cost_mode == "convex":
        return float(np.sqrt(params.T))
    if cost_mode == "strongly_convex":
        if params.G is None or params.alpha is None:
            raise ConfigurationError("strongly convex V needs G and alpha")
        if params.T < 2:
            raise ConfigurationError("strongly convex V needs T >= 2")
        return 2.0 * params.G**2 * np.log(params.T) / params.alpha
    raise ConfigurationError(f"unknown cost mode {cost_mode!r}")


@dataclass
class GenOcoState:
    queue: float
    V: float
    variant: str = "plain"
    alpha_damp: float = 0.0
    phase_start: int = 1
    phase_count: int = 1


def build_genoco_surrogate(state: GenOcoState, cost: FunctionOracle, clipped_g: FunctionOracle) -> FunctionOracle:
    return combine(
        [(state.V, cost), (2.0 * state.queue, clipped_g)],
        strong_convexity=state.V * cost.strong_convexity,
    )


class GenOcoPolicy:
    def __init__(
        self,
        domain: AdmissibleSet,
        V: float,
        variant: str = "plain",
        mode: str = "adaptive_convex",
        alpha_damp: Optional[float] = None,
        grid_points: Optional[np.ndarray] = None,
        check_every: int = 1,
        restart_tol: float = 1e-9,
        rng_seed: int = 0,
    ):
        if variant not in VARIANTS:
            raise ConfigurationError(f"unknown variant {variant!r}")
        if not V > 0:
            raise ConfigurationError("V must be positive")
        if variant == "phase_restart" and grid_points is None:
            raise ConfigurationError("phase restarts need grid points for the phase optimum")
        self.domain = domain
        self.mode = mode
        self.rng_seed = rng_seed
        damp = (1.0 / V if alpha_damp is None else float(alpha_damp)) if variant == "theta_damped" else 0.0
        self.state = GenOcoState(queue=0.0, V=float(V), variant=variant, alpha_damp=damp)
        self.learner = learner_init(domain, mode, rng_seed)
        self.t = 0
        self.check_every = int(check_every)
        self.restart_tol = restart_tol
        if grid_points is not None:
            self.grid = np.atleast_2d(np.asarray(grid_points, dtype=float))
            self._phase_cost = np.zeros(len(self.grid))
            self._phase_feasible = np.ones(len(self.grid), dtype=bool)
            self._phase_policy_cost = 0.0

    @property
    def action(self) -> np.ndarray:
        return self.learner.current_action

    def round(self, reveal: RoundReveal) -> tuple[np.ndarray, PolicyTrace]:
        if reveal.cost is None:
            raise ConfigurationError("generalized OCO rounds need a cost")
        if reveal.k != 1:
            raise ConfigurationError("generalized OCO supports exactly one constraint")
        self.t += 1
        st = self.state
        x = self.learner.current_action
        f = reveal.cost
        g = reveal.constraints[0]
        fx = f.evaluate(x)
        gx = g.evaluate(x)
        fgrad = f.subgradient(x)
        # Subgradient of the clipped constraint, as in clip_constraint.
        ggrad = g.subgradient(x) if gx >= 0 else np.zeros(self.domain.dim)
        clipped = max(gx, 0.0)
        if st.variant == "theta_damped":
            st.queue = max(st.queue + clipped, 0.0) / (1.0 + st.alpha_damp)
        else:
            st.queue = max(st.queue + clipped, 0.0)
        theta = st.alpha_damp * st.queue
        grad = st.V * fgrad + 2.0 * st.queue * ggrad
        h = st.V * f.strong_convexity
        learner_step(self.learner, SurrogateFeedback(grad, h), self.domain)
        trace = PolicyTrace(
            t=self.t,
            action=x,
            cost_value=fx,
            constraint_values=np.array([gx]),
            queue_vector=np.array([st.queue]),
            step_size=self.learner.last_step_size,
            surrogate_grad_norm=float(np.linalg.norm(grad)),
            surrogate_strong_convexity=h,
            constraint_grad_norms=np.array([np.linalg.norm(ggrad)]),
            cost_grad_norm=float(np.linalg.norm(fgrad)),
            theta=theta,
            phase=st.phase_count,
        )
        if st.variant == "phase_restart":
            self._track_phase(f, g, fx)
            if (self.t - st.phase_start + 1) % self.check_every == 0 and self.phase_restart_check() == "restart":
                self._restart()
        return self.learner.current_action, trace

    def _track_phase(self, f: FunctionOracle, g: FunctionOracle, fx: float) -> None:
        self._phase_cost += f.evaluate_many(self.grid)
        self._phase_feasible &= g.evaluate_many(self.grid) <= 1e-9
        self._phase_policy_cost += fx

    def phase_regret(self) -> float:
        if not np.any(self._phase_feasible):
            raise InfeasiblePhaseError(
                f"no grid point is feasible for every constraint since round {self.state.phase_start}"
            )
        return self._phase_policy_cost - float(self._phase_cost[self._phase_feasible].min())

    def phase_restart_check(self) -> str:
        return "restart" if self.phase_regret() < -self.restart_tol else "continue"

    def _restart(self) -> None:
        st = self.state
        st.queue = 0.0
        self.learner = learner_init(self.domain, self.mode, self.rng_seed)
        st.phase_start = self.t + 1
        st.phase_count += 1
        self._phase_cost[:] = 0.0
        self._phase_feasible[:] = True
        self._phase_policy_cost = 0.0


def genoco_round(policy: GenOcoPolicy, reveal: RoundReveal) -> tuple[np.ndarray, PolicyTrace]:
    return policy.round(reveal)
