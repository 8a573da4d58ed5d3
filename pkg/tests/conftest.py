import numpy as np
import pytest

from regmdp.experiments import generate_random_mdp
from regmdp.mdp import TabularMdp

# acceptance results, filled by tests/test_acceptance.py
VERDICTS: dict[int, str] = {}


@pytest.fixture
def seed7():
    return generate_random_mdp(8, 3, seed=7)


def random_policy(rng, S, A, low=0.0):
    pi = rng.dirichlet(np.ones(A), size=S)
    if low:
        pi = low + (1.0 - A * low) * pi
    return pi


def chain(gamma=0.5):
    """s0 -> s1, s1 absorbing; reward 1 only in s1."""
    P = np.zeros((2, 1, 2))
    P[0, 0, 1] = 1.0
    P[1, 0, 1] = 1.0
    return TabularMdp(P, np.array([[0.0], [1.0]]), gamma, np.array([1.0, 0.0]))


def bandit(rewards, gamma=0.0):
    r = np.atleast_2d(np.asarray(rewards, dtype=float))
    return TabularMdp(np.ones((1, r.shape[1], 1)), r, gamma, np.array([1.0]))


def pytest_terminal_summary(terminalreporter):
    if VERDICTS:
        terminalreporter.section("acceptance criteria")
        for k in sorted(VERDICTS):
            terminalreporter.write_line(VERDICTS[k])


def tangent_direction(rng, S, A):
    """Random unit direction with zero row sums."""
    d = rng.standard_normal((S, A))
    d -= d.mean(axis=1, keepdims=True)
    return d / np.linalg.norm(d)


def directional_fd(f, x, d, h=1e-4):
    """Fourth-order central difference of ``f`` along ``d``."""
    return (8 * (f(x + h * d) - f(x - h * d)) - (f(x + 2 * h * d) - f(x - 2 * h * d))) / (12 * h)


def fd_relative_error(grad, fd, d):
    """Error of the directional derivative, scaled by the tangent-space gradient norm."""
    g_t = grad - grad.mean(axis=-1, keepdims=True)
    exact = float(np.sum(grad * d))
    return abs(fd - exact) / max(np.linalg.norm(g_t) * np.linalg.norm(d), 1e-300)
