import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays
from scipy.optimize import minimize

from conftest import bandit, directional_fd, fd_relative_error, random_policy, tangent_direction
from regmdp import mdp as core
from regmdp.bellman import regularized_greedy, soft_optimal_oracle
from regmdp.gradients import (exact_gradient, mdpo_update, pga, simplex_project, smoothness_constant,
                              softmax_gradient, softmax_pg, softmax_policy)
from regmdp.regularizers import Regularizer

ENT = Regularizer("shifted-entropy")
L2 = Regularizer("squared-l2")


def test_bandit_gradient():
    m = bandit([[1.0, 0.0]], gamma=0.0)
    assert exact_gradient(m, [[0.5, 0.5]], None, 0.0) == pytest.approx(np.array([[1.0, 0.0]]))


def test_constant_shift_leaves_gradient(seed7):
    # shifted and raw entropy differ by a constant
    pi = random_policy(np.random.default_rng(0), 8, 3, low=0.05)
    a = exact_gradient(seed7, pi, ENT, 0.4)
    b = exact_gradient(seed7, pi, Regularizer("raw-entropy"), 0.4)
    # they differ by a per-state constant, which vanishes on the tangent space
    tangent = lambda g: g - g.mean(axis=1, keepdims=True)
    assert tangent(a) == pytest.approx(tangent(b), abs=1e-12)


def test_seed7_entropy_finite_difference(seed7):
    rng = np.random.default_rng(11)
    pi = random_policy(rng, 8, 3, low=0.05)
    g = exact_gradient(seed7, pi, ENT, 0.3)
    f = lambda p: core.objective(seed7, p, ENT, 0.3)
    for _ in range(10):
        d = tangent_direction(rng, 8, 3)
        assert fd_relative_error(g, directional_fd(f, pi, d), d) <= 1e-6


def test_softmax_gradient_finite_difference(seed7):
    rng = np.random.default_rng(12)
    theta = rng.normal(size=(8, 3))
    g, _ = softmax_gradient(seed7, theta, ENT, 0.3)
    f = lambda th: core.objective(seed7, softmax_policy(th), ENT, 0.3)
    for _ in range(5):
        d = rng.standard_normal((8, 3))
        fd = directional_fd(f, theta, d)
        assert abs(fd - np.sum(g * d)) <= 1e-6 * np.linalg.norm(g) * np.linalg.norm(d)


def test_projection_examples():
    assert simplex_project([0.9, 0.5]) == pytest.approx([0.7, 0.3])
    assert simplex_project([2.0, -1.0, 0.0]) == pytest.approx([1.0, 0.0, 0.0])
    p = np.array([[0.2, 0.3, 0.5], [1.0, 0.0, 0.0]])
    assert simplex_project(p) == pytest.approx(p, abs=1e-15)
    with pytest.raises(ValueError):
        simplex_project([0.5, 0.5], floor=0.6)


def qp_oracle(x, floor):
    n = x.size
    res = minimize(lambda p: 0.5 * np.sum((p - x) ** 2), np.full(n, 1 / n), jac=lambda p: p - x,
                   bounds=[(floor, 1)] * n, constraints=[{"type": "eq", "fun": lambda p: p.sum() - 1}],
                   method="SLSQP", options={"ftol": 1e-14, "maxiter": 500})
    return res.x


@settings(max_examples=60, deadline=None)
@given(arrays(float, st.integers(2, 5), elements=st.floats(-3, 3)), st.sampled_from([0.0, 0.01, 0.1]))
def test_projection_vs_qp(x, floor):
    p = simplex_project(x, floor)
    assert p.sum() == pytest.approx(1.0, abs=1e-12)
    assert np.all(p >= floor - 1e-15)
    assert p == pytest.approx(qp_oracle(x, floor), abs=1e-6)
    # variational inequality: <x - p, q - p> <= 0 for feasible q
    for q in np.eye(x.size) * (1 - x.size * floor) + floor:
        assert np.dot(x - p, q - p) <= 1e-9


def test_pga_fixed_point(seed7):
    ps, _ = soft_optimal_oracle(seed7, ENT, 0.5)
    pi, _ = pga(seed7, ENT, 0.5, ps, T=50)
    assert np.max(np.abs(pi - ps)) <= 1e-9


def test_pga_reaches_oracle(seed7):
    # the auto step (1/L with the entropy floor) is tiny here, so use a fixed step
    _, vs = soft_optimal_oracle(seed7, ENT, 0.2)
    pi, tr = pga(seed7, ENT, 0.2, core.uniform_policy(seed7), step=0.1, T=5000, reference=vs, record_every=500)
    assert tr.column("gap")[-1] <= 1e-4
    assert tr.best_index is not None and tr.best_policy.shape == (8, 3)


def test_pga_rejects_bad_step(seed7):
    with pytest.raises(ValueError):
        pga(seed7, L2, 0.1, core.uniform_policy(seed7), step=0.0)


def test_smoothness_examples(seed7):
    s = smoothness_constant(seed7, L2, 0.0)
    assert s.l_lambda == pytest.approx(4 * 0.9 * 3 / 0.1**3)
    zero = core.TabularMdp(seed7.transition, seed7.reward, 0.0, seed7.mu)
    s = smoothness_constant(zero, L2, 0.5)
    assert s.unregularized == 0.0
    c = L2.constants(3)
    assert s.l_lambda == pytest.approx(0.5 * (2 * math.sqrt(3) * c.c_phi_1 + c.c_phi_2))


@pytest.mark.parametrize("reg,lam", [(L2, 0.0), (L2, 0.7), (ENT, 0.3)], ids=["plain", "l2", "entropy"])
def test_empirical_curvature_below_l(seed7, reg, lam):
    rng = np.random.default_rng(21)
    L = smoothness_constant(seed7, reg, lam).l_lambda
    f = lambda p: core.objective(seed7, p, reg, lam)
    h = 1e-3
    for _ in range(50):
        pi = random_policy(rng, 8, 3, low=0.01)
        d = tangent_direction(rng, 8, 3)
        curv = abs(f(pi + h * d) - 2 * f(pi) + f(pi - h * d)) / h**2
        assert curv <= L


def test_softmax_symmetric_bandit():
    m = bandit([[0.5, 0.5, 0.5]], gamma=0.5)
    theta, _ = softmax_pg(m, ENT, 0.3, np.zeros((1, 3)), T=200)
    assert np.ptp(theta) <= 1e-12
    assert softmax_policy(theta) == pytest.approx(np.full((1, 3), 1 / 3))


def test_softmax_gap_monotone(seed7):
    _, vs = soft_optimal_oracle(seed7, ENT, 0.5)
    _, tr = softmax_pg(seed7, ENT, 0.5, np.zeros((8, 3)), T=3000, reference=vs, record_every=100)
    gaps = np.array(tr.column("gap"))
    assert np.all(np.diff(gaps) <= 1e-12) and gaps[-1] < gaps[0]
    assert 0 < tr.column("min_prob")[-1] <= 1 / 3


def test_softmax_rejects_non_entropy(seed7):
    with pytest.raises(NotImplementedError):
        softmax_pg(seed7, L2, 0.5, np.zeros((8, 3)), T=1)


def test_mdpo_equals_greedy(seed7):
    pi = random_policy(np.random.default_rng(3), 8, 3)
    lam = 0.4
    new = mdpo_update(seed7, ENT, lam, pi, 1 / lam)
    greedy = regularized_greedy(seed7, ENT, lam, core.regularized_value(seed7, pi, ENT, lam))
    assert np.max(0.5 * np.abs(new - greedy).sum(axis=1)) <= 1e-10


def test_mdpo_small_step_and_errors(seed7):
    pi = random_policy(np.random.default_rng(4), 8, 3)
    new = mdpo_update(seed7, ENT, 0.4, pi, 1e-8)
    assert np.max(0.5 * np.abs(new - pi).sum(axis=1)) <= 1e-6
    with pytest.raises(ValueError):
        mdpo_update(seed7, ENT, 0.4, pi, 3.0)
    with pytest.raises(NotImplementedError):
        mdpo_update(seed7, L2, 0.4, pi, 1.0)


def test_mdpo_entropy_pull():
    # Q is constant per state, so repeated updates drift towards uniform
    m = bandit([[0.3, 0.3, 0.3]], gamma=0.5)
    pi = np.array([[0.8, 0.15, 0.05]])
    for _ in range(60):
        pi = mdpo_update(m, ENT, 0.5, pi, 0.5)
    assert pi == pytest.approx(np.full((1, 3), 1 / 3), abs=1e-6)
