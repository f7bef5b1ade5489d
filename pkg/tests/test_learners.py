import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from qoco.geometry import AdmissibleSet
from qoco.learners import SurrogateFeedback, convex_step_size, learner_init, learner_step, matching_oracle
from qoco.oracle import convex_regret_bound, strongly_convex_regret_bound


def brute_force_matching(W):
    """First best permutation in lexicographic order, by enumeration."""
    n = W.shape[0]
    best, best_perm = -np.inf, None
    for perm in itertools.permutations(range(n)):
        v = sum(W[i, perm[i]] for i in range(n))
        if v > best:
            best, best_perm = v, perm
    P = np.zeros((n, n))
    P[np.arange(n), best_perm] = 1.0
    return P.ravel()


@pytest.mark.parametrize(
    "domain, x1",
    [
        (AdmissibleSet.simplex(3), [1 / 3] * 3),
        (AdmissibleSet.box([-1] * 4, [1] * 4), [0.0] * 4),
        (AdmissibleSet.birkhoff(2), [0.5] * 4),
    ],
)
def test_initial_action_is_projected_origin(domain, x1):
    np.testing.assert_allclose(learner_init(domain).current_action, x1, atol=1e-9)


def test_convex_step_size_from_past_gradients():
    dom = AdmissibleSet.box([-5.0], [5.0])
    st_ = learner_init(dom)
    st_.diameter = 1.0
    for g in (3.0, 4.0):
        learner_step(st_, SurrogateFeedback(np.array([g])), dom)
    assert convex_step_size(1.0, 25.0) == pytest.approx(np.sqrt(2) / 10)
    learner_step(st_, SurrogateFeedback(np.array([1.0])), dom)
    assert st_.last_step_size == pytest.approx(0.141421, abs=1e-6)


def test_first_convex_step_is_skipped():
    dom = AdmissibleSet.box([-1.0], [1.0])
    st_ = learner_step(learner_init(dom), SurrogateFeedback(np.array([7.0])), dom)
    assert st_.last_step_size == 0.0
    np.testing.assert_array_equal(st_.current_action, [0.0])


def test_strongly_convex_step_includes_current_curvature():
    dom = AdmissibleSet.box([-1.0], [1.0])
    st_ = learner_init(dom, "adaptive_strongly_convex")
    learner_step(st_, SurrogateFeedback(np.array([0.1]), 2.0), dom)
    assert st_.last_step_size == pytest.approx(0.5)
    learner_step(st_, SurrogateFeedback(np.array([0.1]), 2.0), dom)
    assert st_.last_step_size == pytest.approx(0.25)


@pytest.mark.parametrize("mode", ["adaptive_convex", "adaptive_strongly_convex", "ftpl"])
def test_zero_gradient_keeps_action(mode):
    dom = AdmissibleSet.birkhoff(3)
    st_ = learner_init(dom, mode)
    if mode != "ftpl":
        learner_step(st_, SurrogateFeedback(np.arange(9.0), 1.0), dom)
        learner_step(st_, SurrogateFeedback(np.arange(9.0)[::-1], 1.0), dom)
        before = st_.current_action.copy()
        learner_step(st_, SurrogateFeedback(np.zeros(9), 1.0), dom)
        np.testing.assert_array_equal(st_.current_action, before)
    else:
        # FTPL has no step; it always returns a vertex.
        learner_step(st_, SurrogateFeedback(np.zeros(9)), dom)
        P = st_.current_action.reshape(3, 3)
        assert set(np.unique(P)) <= {0.0, 1.0}
        np.testing.assert_array_equal(P.sum(axis=0), 1.0)


def test_learner_rejects_bad_gradients():
    dom = AdmissibleSet.box([0, 0], [1, 1])
    with pytest.raises(ValueError):
        learner_step(learner_init(dom), SurrogateFeedback(np.zeros(3)), dom)
    with pytest.raises(ValueError):
        learner_step(learner_init(dom), SurrogateFeedback(np.array([np.nan, 0.0])), dom)
    with pytest.raises(ValueError):
        learner_init(dom, "ftpl")


def test_matching_examples():
    np.testing.assert_array_equal(matching_oracle(np.array([[5, 1], [1, 5]])), [1, 0, 0, 1])
    np.testing.assert_array_equal(matching_oracle(np.array([[1, 5], [5, 1]])), [0, 1, 1, 0])


def test_matching_ties_go_lexicographic():
    np.testing.assert_array_equal(matching_oracle(np.zeros((3, 3))), np.eye(3).ravel())
    W = np.array([[1.0, 1.0], [1.0, 1.0]])
    np.testing.assert_array_equal(matching_oracle(W), [1, 0, 0, 1])


@settings(max_examples=200, deadline=None)
@given(n=st.integers(1, 4), data=st.data())
def test_matching_agrees_with_enumeration(n, data):
    W = data.draw(arrays(float, (n, n), elements=st.integers(-4, 4).map(float)))
    np.testing.assert_array_equal(matching_oracle(W), brute_force_matching(W))


def test_ftpl_is_seeded():
    dom = AdmissibleSet.birkhoff(3)
    runs = []
    for _ in range(2):
        s = learner_init(dom, "ftpl", rng_seed=9)
        seq = []
        for t in range(20):
            learner_step(s, SurrogateFeedback(np.sin(np.arange(9.0) * (t + 1))), dom)
            seq.append(s.current_action.copy())
        runs.append(np.array(seq))
    np.testing.assert_array_equal(runs[0], runs[1])


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**20), T=st.integers(1, 200))
def test_convex_learner_regret_bound_on_linear_losses(seed, T):
    # Linear losses on a box: the best fixed action is an exact vertex.
    rng = np.random.default_rng(seed)
    dom = AdmissibleSet.box([-1, -1], [1, 1])
    s = learner_init(dom)
    C = rng.normal(size=(T, 2)) * rng.uniform(0, 3, size=(T, 1))
    played = 0.0
    for c in C:
        played += c @ s.current_action
        learner_step(s, SurrogateFeedback(c), dom)
    best = -np.abs(C.sum(axis=0)).sum()
    bound = convex_regret_bound(np.linalg.norm(C, axis=1), dom.diameter)[-1]
    assert played - best <= bound + 1e-9


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**20), T=st.integers(1, 200), a=st.floats(0.1, 3.0))
def test_strongly_convex_learner_regret_bound(seed, T, a):
    # f_t = a/2 ||x - z_t||^2 on a box; the best fixed action clips the mean.
    rng = np.random.default_rng(seed)
    dom = AdmissibleSet.box([-1, -1], [1, 1])
    s = learner_init(dom, "adaptive_strongly_convex")
    Z = rng.uniform(-2, 2, size=(T, 2))
    played, norms = 0.0, []
    for z in Z:
        x = s.current_action
        played += 0.5 * a * np.sum((x - z) ** 2)
        g = a * (x - z)
        norms.append(np.linalg.norm(g))
        learner_step(s, SurrogateFeedback(g, a), dom)
    xs = np.clip(Z.mean(axis=0), -1, 1)
    best = 0.5 * a * np.sum((xs - Z) ** 2)
    bound = strongly_convex_regret_bound(np.array(norms), np.full(T, a))[-1]
    assert played - best <= bound + 1e-9
