import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import bandit, chain, random_policy
from regmdp import mdp as core
from regmdp.mdp import MdpValidationError, TabularMdp
from regmdp.regularizers import Regularizer

ENT = Regularizer("shifted-entropy")


def test_single_state_geometric():
    m = bandit([1.0], gamma=0.5)
    assert core.evaluate_policy(m, [[1.0]]) == pytest.approx([2.0], abs=1e-14)
    assert core.q_values(m, [[1.0]], None, 0.0) == pytest.approx(np.array([[2.0]]), abs=1e-14)
    assert core.objective(m, [[1.0]], None, 0.0) == pytest.approx(2.0, abs=1e-14)


def test_chain_values_and_visitation():
    m = chain(0.5)
    pi = [[1.0], [1.0]]
    assert core.evaluate_policy(m, pi) == pytest.approx([1.0, 2.0], abs=1e-14)
    assert core.visitation_distribution(m, pi, [1.0, 0.0]) == pytest.approx([0.5, 0.5], abs=1e-14)


def test_visitation_gamma_zero_is_start(seed7):
    m = TabularMdp(seed7.transition, seed7.reward, 0.0, seed7.mu)
    start = np.linspace(1, 2, 8) / np.linspace(1, 2, 8).sum()
    d = core.visitation_distribution(m, core.uniform_policy(m), start)
    assert np.array_equal(d, start)
    assert core.visitation_distribution(bandit([0.3, 0.1], 0.7), [[0.5, 0.5]], [1.0]) == pytest.approx([1.0])


def test_monte_carlo_matches_exact_value(seed7):
    # independent vectorised rollouts, not the library simulator
    rng = np.random.default_rng(2024)
    pi = random_policy(np.random.default_rng(1), 8, 3)
    g, K, n = seed7.discount, 150, 10**6
    pcdf = np.cumsum(pi, axis=1)
    tcdf = np.cumsum(seed7.transition, axis=2)
    s = rng.choice(8, size=n, p=seed7.mu)
    ret = np.zeros(n)
    disc = 1.0
    for _ in range(K):
        a = np.minimum((rng.random(n)[:, None] > pcdf[s]).sum(axis=1), 2)
        ret += disc * seed7.reward[s, a]
        s = np.minimum((rng.random(n)[:, None] > tcdf[s, a]).sum(axis=1), 7)
        disc *= g
    exact = seed7.mu @ core.evaluate_policy(seed7, pi)
    se = ret.std(ddof=1) / math.sqrt(n)
    assert abs(ret.mean() - exact) <= 3 * se + g**K / (1 - g)


def test_phi_examples(seed7):
    u = core.uniform_policy(seed7)
    assert np.allclose(core.phi_accumulator(seed7, u, ENT), 0.0, atol=1e-14)
    det = np.zeros((8, 3))
    det[:, 0] = 1.0
    assert core.phi_accumulator(seed7, det, ENT) == pytest.approx(np.full(8, 10 * math.log(3)), rel=1e-12)


def test_constant_omega_shift(seed7):
    # squared-l2 is constant (1/2) on deterministic policies
    det = np.zeros((8, 3))
    det[np.arange(8), np.arange(8) % 3] = 1.0
    reg = Regularizer("squared-l2")
    assert core.phi_accumulator(seed7, det, reg) == pytest.approx(np.full(8, 5.0), rel=1e-12)
    v = core.evaluate_policy(seed7, det)
    assert core.regularized_value(seed7, det, reg, 0.4) == pytest.approx(v - 0.4 * 0.5 / 0.1, abs=1e-12)


def test_regularized_value_frozen(seed7):
    # plain fixed-point iteration on r - lam*Omega (frozen)
    pi = np.random.default_rng(123).dirichlet(np.ones(3), size=8)
    want = [4.856476975458452, 5.08578517626644, 4.890183439000472, 4.826482005389618,
            5.139934728216608, 4.703873321431313, 5.071879630359943, 5.013545560364591]
    assert core.regularized_value(seed7, pi, ENT, 0.3) == pytest.approx(want, abs=1e-9)
    assert core.objective(seed7, pi, ENT, 0.3) == pytest.approx(4.94852010456093, abs=1e-9)


def test_lambda_zero_and_decomposition(seed7):
    pi = random_policy(np.random.default_rng(5), 8, 3)
    assert np.array_equal(core.regularized_value(seed7, pi, ENT, 0.0), core.evaluate_policy(seed7, pi))
    v = core.regularized_value(seed7, pi, ENT, 0.3)
    assert v == pytest.approx(core.evaluate_policy(seed7, pi) - 0.3 * core.phi_accumulator(seed7, pi, ENT), abs=1e-12)
    with pytest.raises(ValueError):
        core.regularized_value(seed7, pi, ENT, -0.1)


def test_q_bellman_consistency(seed7):
    pi = random_policy(np.random.default_rng(6), 8, 3)
    q = core.q_values(seed7, pi, ENT, 0.3)
    v = core.regularized_value(seed7, pi, ENT, 0.3)
    resid = (pi * q).sum(axis=1) - 0.3 * ENT.value(pi) - v
    assert np.max(np.abs(resid)) <= 1e-9
    assert core.advantage(seed7, pi, ENT, 0.3) == pytest.approx(q - v[:, None], abs=1e-12)


def test_objective_start_delta(seed7):
    pi = random_policy(np.random.default_rng(8), 8, 3)
    v = core.regularized_value(seed7, pi, ENT, 0.3)
    assert core.objective(seed7, pi, ENT, 0.3, start=np.eye(8)[3]) == pytest.approx(v[3], abs=1e-12)
    assert core.objective(seed7, pi, ENT, 0.3) == pytest.approx(v.mean(), abs=1e-12)


def test_mismatch_examples(seed7):
    u = np.full(8, 1 / 8)
    c = core.mismatch_diagnostics(seed7, u, u)
    assert c.rho == 1.0
    assert c.rho_nu_trivial == pytest.approx(8 / 0.1)
    two = chain(0.5)
    c = core.mismatch_diagnostics(two, [0.9, 0.1], [0.5, 0.5])
    assert c.rho == pytest.approx(1.8)
    c = core.mismatch_diagnostics(two, [0.5, 0.5], [1.0, 0.0])
    assert c.infinite and math.isinf(c.rho) and c.notes


def test_mismatch_rho_nu_within_trivial(seed7):
    rng = np.random.default_rng(3)
    pols = [random_policy(rng, 8, 3) for _ in range(4)]
    nu = rng.dirichlet(np.ones(8))
    c = core.mismatch_diagnostics(seed7, seed7.mu, nu, pols)
    assert 1.0 <= c.rho_nu <= c.rho_nu_trivial


@pytest.mark.parametrize("field,bad,msg", [
    ("transition", lambda P: P * 1.01, "sums to"),
    ("reward", lambda r: r + 2.0, "outside"),
    ("discount", lambda g: 1.0, "discount"),
])
def test_validation_names_offender(seed7, field, bad, msg):
    kw = dict(transition=seed7.transition, reward=seed7.reward, discount=seed7.discount,
              initial_dist=seed7.mu)
    kw[field] = bad(kw[field])
    with pytest.raises(MdpValidationError, match=msg):
        TabularMdp(**kw)


def test_shape_errors(seed7):
    with pytest.raises(ValueError):
        core.evaluate_policy(seed7, np.full((8, 2), 0.5))
    with pytest.raises(MdpValidationError):
        TabularMdp(seed7.transition, seed7.reward[:, :2], 0.9, seed7.mu)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 6), st.integers(1, 4), st.floats(0.0, 0.95), st.integers(0, 2**31))
def test_visitation_is_distribution(S, A, g, seed):
    rng = np.random.default_rng(seed)
    m = TabularMdp(rng.dirichlet(np.ones(S), size=(S, A)), rng.random((S, A)), g, rng.dirichlet(np.ones(S)))
    pi = random_policy(rng, S, A)
    d = core.visitation_distribution(m, pi, m.mu)
    assert np.all(d >= -1e-15) and abs(d.sum() - 1) <= 1e-10
    # values stay inside [0, r_max/(1-g)]
    v = core.evaluate_policy(m, pi)
    assert np.all(v >= -1e-12) and np.all(v <= 1 / (1 - g) + 1e-9)
