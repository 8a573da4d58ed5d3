"""Monte Carlo estimators driven by a restart simulator.

Solvers in this module never read the transition tensor: they go through a
:class:`Simulator`, which offers single-step ``reset``/``step`` calls and
batched rollouts. Batched randomness comes from counter-based Philox streams
keyed by ``(seed, call index, chunk index)`` with a fixed chunk size, so
results do not depend on how the work is split or which kernel runs it.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from . import kernels
from . import mdp as core
from .regularizers import Regularizer, omega_unchecked

CHUNK = 4096


def _cdf_table(probs) -> np.ndarray:
    """Row-wise cumulative sums, set to 2.0 from the last positive entry on."""
    probs = np.atleast_2d(np.asarray(probs, dtype=float))
    cdf = np.cumsum(probs, axis=1)
    last = probs.shape[1] - 1 - np.argmax(probs[:, ::-1] > 0, axis=1)
    cols = np.arange(probs.shape[1])
    cdf[cols[None, :] >= last[:, None]] = 2.0
    return np.ascontiguousarray(cdf)


class Simulator:
    """Restart simulator around a tabular MDP.

    ``reset(nu)`` and ``step(a)`` form the interactive interface; the
    batched methods below are what the estimators use.
    """

    def __init__(self, mdp: core.TabularMdp, seed: int = 0):
        self._mdp = mdp
        self.seed = int(seed)
        self.num_states = mdp.num_states
        self.num_actions = mdp.num_actions
        self.discount = mdp.discount
        self._p_cdf = _cdf_table(mdp.transition.reshape(-1, mdp.num_states))
        self._reward = np.ascontiguousarray(mdp.reward)
        self._calls = 0
        self._rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([self.seed, 2 ** 32 - 1])))
        self.state = None
        self.samples = 0  # transitions simulated so far

    # interactive interface
    def reset(self, nu) -> int:
        nu = core.check_distribution(self._mdp, nu)
        self.state = int(np.count_nonzero(_cdf_table(nu)[0] <= self._rng.random()))
        return self.state

    def step(self, action: int):
        if self.state is None:
            raise RuntimeError("call reset before step")
        if not 0 <= action < self.num_actions:
            raise ValueError(f"action {action} out of range")
        r = float(self._reward[self.state, action])
        row = self._p_cdf[self.state * self.num_actions + action]
        self.state = int(np.count_nonzero(row <= self._rng.random()))
        self.samples += 1
        return self.state, r

    # batched interface
    def _uniform_chunks(self, n, width):
        call = self._calls
        self._calls += 1
        for c, lo in enumerate(range(0, n, CHUNK)):
            rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([self.seed, call, c])))
            yield lo, rng.random((min(CHUNK, n - lo), width))

    def _policy_tables(self, policy, reg, lam):
        pi = core.check_policy(self._mdp, policy)
        pen = lam * omega_unchecked(reg, pi) if lam else np.zeros(self.num_states)
        return _cdf_table(pi), np.ascontiguousarray(pen, dtype=float)

    def visitation_starts(self, policy, nu, horizon: int, n: int) -> np.ndarray:
        """``n`` draws from the truncated visitation law ``d_{pi,nu,K}``."""
        nu_cdf = _cdf_table(core.check_distribution(self._mdp, nu))[0]
        pi_cdf, _ = self._policy_tables(policy, None, 0.0)
        out = np.empty(n, dtype=np.int64)
        for lo, U in self._uniform_chunks(n, 1 + 3 * horizon):
            out[lo:lo + len(U)] = kernels.sample_starts(nu_cdf, pi_cdf, self._p_cdf, self.num_actions,
                                                        1.0 - self.discount, horizon, U, 0)
        self.samples += n * horizon
        return out

    def start_action_returns(self, policy, reg, lam, nu, horizon, n, start="visitation",
                             action="uniform", include_t0=False):
        """Draw ``n`` start pairs and the truncated penalised return from each.

        ``start`` is ``visitation`` (truncated visitation law) or ``restart``
        (plain draw from ``nu``); ``action`` is ``uniform`` or ``policy``.
        Returns ``(s0, a0, q, pen)`` where ``pen[s] = lam * Omega(pi(.|s))``.
        """
        nu_cdf = _cdf_table(core.check_distribution(self._mdp, nu))[0]
        pi_cdf, pen = self._policy_tables(policy, reg, lam)
        disc = np.power(self.discount, np.arange(max(horizon, 1), dtype=float))
        k_start = horizon if start == "visitation" else 0
        width = 1 + 3 * k_start + 1 + 2 * horizon
        s0 = np.empty(n, dtype=np.int64)
        a0 = np.empty(n, dtype=np.int64)
        q = np.empty(n)
        A = self.num_actions
        for lo, U in self._uniform_chunks(n, width):
            hi = lo + len(U)
            s = kernels.sample_starts(nu_cdf, pi_cdf, self._p_cdf, A, 1.0 - self.discount, k_start, U, 0)
            ucol = U[:, 1 + 3 * k_start]
            if action == "uniform":
                a = np.minimum((ucol * A).astype(np.int64), A - 1)
            else:
                a = np.count_nonzero(pi_cdf[s] <= ucol[:, None], axis=1).astype(np.int64)
            q[lo:hi] = kernels.rollout(s, a, self._reward, pi_cdf, self._p_cdf, A, pen, disc, horizon,
                                       U, 2 + 3 * k_start, bool(include_t0))
            s0[lo:hi] = s
            a0[lo:hi] = a
        self.samples += n * (k_start + horizon)
        return s0, a0, q, pen

    def trajectory(self, policy, reg, lam, s0: int, a0: int, horizon: int) -> "Trajectory":
        """One rollout through the interactive interface, for trace dumps."""
        pi = core.check_policy(self._mdp, policy)
        pi_cdf, pen = self._policy_tables(pi, reg, lam)
        self.state = int(s0)
        states, actions, rewards, penalties = [int(s0)], [int(a0)], [], []
        a = int(a0)
        for t in range(horizon):
            s = self.state
            penalties.append(float(pen[s]))
            nxt, r = self.step(a)
            rewards.append(r)
            if t == horizon - 1:
                break
            a = int(np.count_nonzero(pi_cdf[nxt] <= self._rng.random()))
            states.append(nxt)
            actions.append(a)
        return Trajectory(states, actions, rewards, penalties)


@dataclass
class Trajectory:
    states: list
    actions: list
    rewards: list
    penalties: list

    def __post_init__(self):
        if not (len(self.states) == len(self.actions) == len(self.rewards) == len(self.penalties)):
            raise ValueError("trajectory fields have inconsistent lengths")


def dump_trajectories(trajectories, path):
    """One JSON record per line: states, actions, rewards, penalties."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for tr in trajectories:
            fh.write(json.dumps(asdict(tr)) + "\n")


def load_trajectories(path):
    with open(path, encoding="utf-8") as fh:
        return [Trajectory(**json.loads(line)) for line in fh if line.strip()]


@dataclass(frozen=True)
class TruncationPlan:
    horizon: int
    epsilon: float
    lam: float
    c_phi: float
    gamma: float

    @classmethod
    def from_accuracy(cls, epsilon, lam, c_phi, gamma):
        return cls(truncation_horizon(epsilon, lam, c_phi, gamma), epsilon, lam, c_phi, gamma)


def truncation_horizon(epsilon, lam, c_phi, gamma) -> int:
    """``ceil(log(12 (1 + lam C) / (eps (1-g)^2)) / log(1/g))``, at least one."""
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    if not 0.0 <= gamma < 1.0:
        raise ValueError("gamma must lie in [0, 1)")
    if gamma == 0:
        return 1
    x = math.log(12.0 * (1.0 + lam * c_phi) / (epsilon * (1.0 - gamma) ** 2)) / math.log(1.0 / gamma)
    # absorb rounding when the ratio is an exact integer
    return max(1, int(math.ceil(x - 1e-9)))


def selection_sample_size(epsilon, lam, c_phi, gamma, num_candidates, delta) -> int:
    """``ceil(2 (1 + lam C)^2 / (eps^2 (1-g)^2) log(T / delta))``."""
    return int(math.ceil(2 * (1 + lam * c_phi) ** 2 / (epsilon ** 2 * (1 - gamma) ** 2)
                         * math.log(num_candidates / delta)))


def value_bias_bound(lam, c_phi, gamma, horizon) -> float:
    return gamma ** horizon * (1.0 + lam * c_phi) / (1.0 - gamma)


def gradient_bias_bound(lam, c_phi, gamma, horizon) -> float:
    return 6.0 * gamma ** horizon * (1.0 + lam * c_phi) / (1.0 - gamma) ** 2


def hoeffding_tail(n, epsilon, num_actions, lam, c_tilde, gamma) -> float:
    """``2 exp(-N eps^2 (1-g)^4 / (2 |A|^2 (1 + lam C)^2))``."""
    return 2.0 * math.exp(-n * epsilon ** 2 * (1 - gamma) ** 4
                          / (2.0 * num_actions ** 2 * (1 + lam * c_tilde) ** 2))


def hoeffding_width(n, delta, num_actions, lam, c_tilde, gamma) -> float:
    """Deviation at which :func:`hoeffding_tail` equals ``delta``."""
    return math.sqrt(2.0 * num_actions ** 2 * (1 + lam * c_tilde) ** 2 * math.log(2.0 / delta)
                     / (n * (1 - gamma) ** 4))


def truncated_visitation(mdp, policy, nu, horizon) -> np.ndarray:
    """Analytic law of :meth:`Simulator.visitation_starts`."""
    g = mdp.discount
    P = core.policy_matrix(mdp, core.check_policy(mdp, policy))
    x = np.asarray(nu, dtype=float)
    if horizon == 0:
        return x.copy()
    out = (1.0 - g) * x
    for t in range(1, horizon):
        x = x @ P
        out = out + (1.0 - g) * g ** t * x
    return out + g ** horizon * (x @ P)


def truncated_q(mdp, policy, reg, lam, horizon, include_t0=False) -> np.ndarray:
    """Expected value of :func:`q_hat` for every ``(s0, a0)``, by backward recursion."""
    pi = core.check_policy(mdp, policy)
    g = mdp.discount
    pen = lam * omega_unchecked(reg, pi) if lam else np.zeros(mdp.num_states)
    w = np.zeros(mdp.num_states)  # value of the remaining steps from a state
    for _ in range(horizon - 1):
        w = (pi * mdp.reward).sum(axis=1) - pen + g * (core.policy_matrix(mdp, pi) @ w)
    q = mdp.reward + g * (mdp.transition @ w)
    return q - pen[:, None] if include_t0 else q


@dataclass(frozen=True)
class Estimate:
    value: float
    stderr: float
    samples: int
    horizon: int

    def __float__(self):
        return self.value


def _check_n(n):
    if not isinstance(n, (int, np.integer)) or n <= 0:
        raise ValueError("number of trajectories must be a positive integer")


def sample_visitation_start(sim: Simulator, policy, nu, horizon: int, n: int | None = None):
    """One start state (or ``n`` of them) from the truncated visitation law."""
    if horizon < 1:
        raise ValueError("horizon must be at least one")
    draws = sim.visitation_starts(policy, nu, horizon, 1 if n is None else n)
    return int(draws[0]) if n is None else draws


def q_hat(sim: Simulator, policy, reg, lam, s0, a0, horizon, n: int = 1, include_t0=False):
    """``R(s0,a0) + sum_{t=1}^{K-1} g^t (R(s_t,a_t) - lam Omega(pi(.|s_t)))``.

    Returns one draw, or the array of ``n`` independent draws when ``n > 1``.
    """
    _check_n(n)
    pi = core.check_policy(sim._mdp, policy)
    pi_cdf, pen = sim._policy_tables(pi, reg, lam)
    disc = np.power(sim.discount, np.arange(max(horizon, 1), dtype=float))
    s = np.full(n, int(s0), dtype=np.int64)
    a = np.full(n, int(a0), dtype=np.int64)
    out = np.empty(n)
    for lo, U in sim._uniform_chunks(n, 2 * horizon):
        out[lo:lo + len(U)] = kernels.rollout(s[lo:lo + len(U)], a[lo:lo + len(U)], sim._reward, pi_cdf,
                                              sim._p_cdf, sim.num_actions, pen, disc, horizon, U, 0,
                                              bool(include_t0))
    sim.samples += n * horizon
    return float(out[0]) if n == 1 else out


def estimate_gradient(sim: Simulator, policy, reg, lam, nu, n: int, horizon: int,
                      include_t0=False, floor=None) -> np.ndarray:
    """``|A|/(1-g) * mean[(Q_hat - lam dOmega_{a0}(s0)) 1{cell = (s0, a0)}]``.

    Starts come from the truncated visitation law and actions are uniform.
    """
    _check_n(n)
    s0, a0, q, _ = sim.start_action_returns(policy, reg, lam, nu, horizon, n, "visitation", "uniform",
                                            include_t0)
    S, A = sim.num_states, sim.num_actions
    contrib = q
    if lam:
        grad = reg.grad(core.check_policy(sim._mdp, policy), floor=floor)
        contrib = q - lam * grad[s0, a0]
    sums = np.bincount(s0 * A + a0, weights=contrib, minlength=S * A)
    return (A / (1.0 - sim.discount)) * (sums / n).reshape(S, A)


def estimate_value(sim: Simulator, policy, reg, lam, nu, n: int, horizon: int) -> Estimate:
    """``mean(Q_hat(s0, a0) - lam Omega(pi(.|s0)))`` with ``s0 ~ nu`` and ``a0 ~ pi``."""
    _check_n(n)
    s0, _, q, pen = sim.start_action_returns(policy, reg, lam, nu, horizon, n, "restart", "policy")
    vals = q - pen[s0]
    se = float(np.std(vals, ddof=1) / math.sqrt(n)) if n > 1 else math.inf
    return Estimate(float(np.mean(vals)), se, n, horizon)


def select_best_policy(sim: Simulator, candidates, reg, lam, nu, n: int, horizon: int):
    """Index of the highest estimated value (lowest index on ties) and all estimates."""
    if len(candidates) == 0:
        raise ValueError("candidate list is empty")
    estimates = [estimate_value(sim, pi, reg, lam, nu, n, horizon) for pi in candidates]
    values = np.array([e.value for e in estimates])
    return int(np.argmax(values)), estimates


def sampled_pga(sim: Simulator, reg: Regularizer, lam, init, nu, step, T, n, horizon, floor=None):
    """Projected ascent with Monte Carlo gradients; returns every iterate."""
    from .gradients import simplex_project
    pi = core.check_policy(sim._mdp, init)
    if floor is None:
        floor = reg.floor if (lam and reg.needs_floor) else 0.0
    iterates = [pi]
    for _ in range(T):
        g = estimate_gradient(sim, pi, reg, lam, nu, n, horizon, floor=floor or None)
        pi = simplex_project(pi + step * g, floor)
        iterates.append(pi)
    return iterates
