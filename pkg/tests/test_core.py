import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qoco.core import (
    EvaluationError,
    FunctionOracle,
    InsufficientSamplesError,
    ProblemParams,
    RoundReveal,
    combine,
    constant,
    linear,
    lipschitz_estimate,
    quadratic,
    verify_convexity_sample,
)
from qoco.geometry import AdmissibleSet

UNIT_BOX = AdmissibleSet.box([-1, -1], [1, 1])
UNIT_BALL = AdmissibleSet.ball([0, 0], 1.0)


def test_squared_norm_is_two_strongly_convex():
    f = quadratic(curvature=2.0)
    assert f.strong_convexity == 2.0
    assert verify_convexity_sample(f, UNIT_BOX, n_pairs=100)


def test_linear_is_convex():
    assert verify_convexity_sample(linear([0.3, -2.0], 1.0), UNIT_BOX)


def test_concave_is_rejected():
    f = FunctionOracle(lambda x: -np.sum(np.asarray(x) ** 2, axis=-1), lambda x: -2 * np.asarray(x))
    assert not verify_convexity_sample(f, UNIT_BOX)


def test_overclaimed_strong_convexity_is_rejected():
    f = quadratic(curvature=1.0)
    f3 = FunctionOracle(f.value, f.grad, strong_convexity=3.0)
    assert not verify_convexity_sample(f3, UNIT_BOX)


def test_lipschitz_of_linear_approaches_norm():
    est = lipschitz_estimate(linear([3.0, 4.0]), UNIT_BALL, n_pairs=5000)
    assert est <= 5.0 + 1e-12
    assert est > 4.9


def test_lipschitz_of_constant_is_zero():
    assert lipschitz_estimate(constant(2.0), UNIT_BALL) == 0.0


def test_lipschitz_of_square_on_ball():
    assert lipschitz_estimate(quadratic(curvature=2.0), UNIT_BALL) <= 2.0


def test_lipschitz_all_pairs_coincide():
    point = AdmissibleSet.box([0.5], [0.5])
    with pytest.raises(InsufficientSamplesError):
        lipschitz_estimate(linear([1.0]), point, n_pairs=10)


def test_nonfinite_value_raises():
    f = FunctionOracle(lambda x: np.nan, lambda x: np.zeros(2))
    with pytest.raises(EvaluationError):
        f.evaluate(np.zeros(2))
    g = FunctionOracle(lambda x: 0.0, lambda x: np.array([np.inf, 0.0]))
    with pytest.raises(EvaluationError):
        g.subgradient(np.zeros(2))


def test_batch_fallback_for_scalar_only_oracle():
    f = FunctionOracle(lambda x: float(np.asarray(x)[0] ** 2), lambda x: np.array([2 * np.asarray(x)[0], 0.0]))
    X = np.array([[1.0, 0.0], [2.0, 5.0]])
    np.testing.assert_allclose(f.evaluate_many(X), [1.0, 4.0])
    np.testing.assert_allclose(f.subgradient_many(X), [[2.0, 0.0], [4.0, 0.0]])


def test_quadratic_closed_form():
    f = quadratic(curvature=2.0, center=[1.0, 0.0], linear=[0.0, 1.0], offset=3.0)
    x = np.array([2.0, 2.0])
    assert f.evaluate(x) == pytest.approx(1.0 * (1 + 4) + 2.0 + 3.0)
    np.testing.assert_allclose(f.subgradient(x), [2.0, 5.0])


def test_combine_weights_and_batches():
    f = combine([(2.0, linear([1.0, 0.0])), (0.0, linear([5.0, 5.0])), (3.0, constant(1.0))])
    assert f.evaluate(np.array([0.5, 9.0])) == pytest.approx(4.0)
    np.testing.assert_allclose(f.evaluate_many(np.array([[0.0, 0.0], [1.0, 1.0]])), [3.0, 5.0])
    empty = combine([])
    np.testing.assert_allclose(empty.evaluate_many(np.zeros((3, 2))), 0.0)


def test_reveal_needs_a_constraint():
    with pytest.raises(ValueError):
        RoundReveal(())
    assert RoundReveal([constant(0.0), constant(1.0)]).k == 2


def test_problem_params_validation():
    with pytest.raises(ValueError):
        ProblemParams(d=1, k=1, T=0)
    with pytest.raises(ValueError):
        ProblemParams(d=1, k=1, T=5, alpha=0.0)


@settings(max_examples=50, deadline=None)
@given(
    a=st.floats(0.0, 5.0),
    center=st.lists(st.floats(-2, 2), min_size=2, max_size=2),
    c=st.lists(st.floats(-3, 3), min_size=2, max_size=2),
)
def test_quadratics_pass_their_declared_convexity(a, center, c):
    f = quadratic(curvature=a, center=center, linear=c)
    assert verify_convexity_sample(f, UNIT_BOX, n_pairs=50)


@settings(max_examples=50, deadline=None)
@given(c=st.lists(st.floats(-3, 3), min_size=2, max_size=2))
def test_lipschitz_estimate_never_exceeds_gradient_norm(c):
    assert lipschitz_estimate(linear(c), UNIT_BALL, n_pairs=200) <= np.linalg.norm(c) * (1 + 1e-9) + 1e-12
