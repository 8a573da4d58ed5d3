"""Exact tabular MDP primitives.

Policies, values and distributions are plain numpy arrays:

* policy ``pi``: ``(S, A)``, rows on the simplex
* state values: ``(S,)``
* state-action values: ``(S, A)``
* distributions over states: ``(S,)``
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .config import TOL
from .regularizers import Regularizer


class MdpValidationError(ValueError):
    """Raised when MDP data violates an invariant; the message names indices."""


@dataclass(frozen=True, eq=False)
class TabularMdp:
    transition: np.ndarray  # (S, A, S)
    reward: np.ndarray  # (S, A)
    discount: float
    initial_dist: np.ndarray  # (S,)
    r_max: float = 1.0

    def __post_init__(self):
        P = np.array(self.transition, dtype=float)
        r = np.array(self.reward, dtype=float)
        mu = np.array(self.initial_dist, dtype=float)
        if P.ndim != 3 or P.shape[0] != P.shape[2] or P.shape[0] < 1 or P.shape[1] < 1:
            raise MdpValidationError(f"transition must have shape (S, A, S), got {P.shape}")
        S, A, _ = P.shape
        if r.shape != (S, A):
            raise MdpValidationError(f"reward must have shape {(S, A)}, got {r.shape}")
        if mu.shape != (S,):
            raise MdpValidationError(f"initial_dist must have shape {(S,)}, got {mu.shape}")
        neg = np.argwhere(~(P >= 0))
        if neg.size:
            s, a, t = neg[0]
            raise MdpValidationError(f"transition[{s},{a},{t}] = {P[s, a, t]} is negative or not finite")
        bad = np.argwhere(np.abs(P.sum(axis=2) - 1.0) > TOL.row_sum)
        if bad.size:
            s, a = bad[0]
            raise MdpValidationError(f"transition row ({s},{a}) sums to {P[s, a].sum()!r}, not 1")
        bad = np.argwhere(~((r >= 0) & (r <= self.r_max)))
        if bad.size:
            s, a = bad[0]
            raise MdpValidationError(f"reward[{s},{a}] = {r[s, a]} outside [0, {self.r_max}]")
        if not 0.0 <= self.discount < 1.0:
            raise MdpValidationError(f"discount {self.discount} outside [0, 1)")
        bad = np.argwhere(~(mu >= 0))
        if bad.size:
            raise MdpValidationError(f"initial_dist[{bad[0][0]}] is negative or not finite")
        if abs(mu.sum() - 1.0) > TOL.row_sum:
            raise MdpValidationError(f"initial_dist sums to {mu.sum()!r}, not 1")
        for name, arr in (("transition", P), ("reward", r), ("initial_dist", mu)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "discount", float(self.discount))

    @property
    def num_states(self) -> int:
        return self.transition.shape[0]

    @property
    def num_actions(self) -> int:
        return self.transition.shape[1]

    @property
    def mu(self) -> np.ndarray:
        return self.initial_dist

    def with_initial(self, dist) -> "TabularMdp":
        return TabularMdp(self.transition, self.reward, self.discount, dist, self.r_max)


def check_policy(mdp: TabularMdp, pi) -> np.ndarray:
    pi = np.asarray(pi, dtype=float)
    if pi.shape != (mdp.num_states, mdp.num_actions):
        raise ValueError(f"policy shape {pi.shape} does not match MDP {(mdp.num_states, mdp.num_actions)}")
    if np.any(~(pi >= -1e-15)):
        raise ValueError("policy has negative or non-finite entries")
    if np.any(np.abs(pi.sum(axis=1) - 1.0) > TOL.policy_row_sum):
        raise ValueError("policy rows do not sum to one")
    return pi


def check_distribution(mdp: TabularMdp, dist) -> np.ndarray:
    dist = np.asarray(dist, dtype=float)
    if dist.shape != (mdp.num_states,):
        raise ValueError(f"distribution shape {dist.shape} does not match {mdp.num_states} states")
    if np.any(~(dist >= 0)) or abs(dist.sum() - 1.0) > TOL.visitation_sum:
        raise ValueError("not a probability distribution over states")
    return dist


def uniform_policy(mdp: TabularMdp) -> np.ndarray:
    return np.full((mdp.num_states, mdp.num_actions), 1.0 / mdp.num_actions)


def policy_matrix(mdp: TabularMdp, pi) -> np.ndarray:
    """State-to-state transition matrix ``P^pi``."""
    return np.einsum("sa,sat->st", pi, mdp.transition)


def _solve_discounted(mdp: TabularMdp, P_pi, rhs, transpose=False):
    """Solve ``(I - g P) x = rhs`` (or the transposed system)."""
    S = mdp.num_states
    g = mdp.discount
    M = P_pi.T if transpose else P_pi
    if S <= TOL.dense_max_states:
        return linalg.solve(np.eye(S) - g * M, rhs)
    x = np.array(rhs, dtype=float)
    for _ in range(100000):
        nxt = rhs + g * (M @ x)
        if np.max(np.abs(nxt - x)) <= TOL.linear_residual:
            return nxt
        x = nxt
    return x


def evaluate_policy(mdp: TabularMdp, pi) -> np.ndarray:
    """Unregularized value ``V^pi = (I - g P^pi)^-1 r^pi``."""
    pi = check_policy(mdp, pi)
    r_pi = (pi * mdp.reward).sum(axis=1)
    return _solve_discounted(mdp, policy_matrix(mdp, pi), r_pi)


def phi_accumulator(mdp: TabularMdp, pi, reg: Regularizer) -> np.ndarray:
    """Discounted accumulated regularizer ``Phi^pi``."""
    pi = check_policy(mdp, pi)
    return _solve_discounted(mdp, policy_matrix(mdp, pi), reg.value(pi))


def regularized_value(mdp: TabularMdp, pi, reg: Regularizer | None, lam: float) -> np.ndarray:
    """``V_lam^pi = V^pi - lam Phi^pi``."""
    if lam < 0:
        raise ValueError("lambda must be nonnegative")
    v = evaluate_policy(mdp, pi)
    if lam == 0:
        return v
    return v - lam * phi_accumulator(mdp, pi, reg)


def q_from_values(mdp: TabularMdp, v) -> np.ndarray:
    """One-step lookahead ``r(s,a) + g E[v(s')]``."""
    return mdp.reward + mdp.discount * (mdp.transition @ v)


def q_values(mdp: TabularMdp, pi, reg: Regularizer | None, lam: float) -> np.ndarray:
    return q_from_values(mdp, regularized_value(mdp, pi, reg, lam))


def advantage(mdp: TabularMdp, pi, reg: Regularizer | None, lam: float) -> np.ndarray:
    v = regularized_value(mdp, pi, reg, lam)
    return q_from_values(mdp, v) - v[:, None]


def visitation_distribution(mdp: TabularMdp, pi, start) -> np.ndarray:
    """Normalised discounted occupancy ``(1-g) start (I - g P^pi)^-1``."""
    pi = check_policy(mdp, pi)
    start = check_distribution(mdp, start)
    d = (1.0 - mdp.discount) * _solve_discounted(mdp, policy_matrix(mdp, pi), start, transpose=True)
    if abs(d.sum() - 1.0) > TOL.visitation_sum:
        raise ArithmeticError(f"visitation distribution sums to {d.sum()!r}")
    return d


def objective(mdp: TabularMdp, pi, reg: Regularizer | None, lam: float, start=None) -> float:
    """``J(pi, lam) = E_{s0 ~ start} V_lam^pi(s0)``; ``start`` defaults to mu."""
    start = mdp.mu if start is None else check_distribution(mdp, start)
    return float(start @ regularized_value(mdp, pi, reg, lam))


@dataclass(frozen=True)
class MismatchCoefficients:
    rho: float
    rho_nu: float
    rho_nu_trivial: float
    concentrability: float
    infinite: bool = False
    notes: tuple = field(default=())


def mismatch_diagnostics(mdp: TabularMdp, mu, nu, policies=()) -> MismatchCoefficients:
    """Distribution-mismatch coefficients between a measurement and a restart distribution.

    ``rho_nu`` is the max visitation ratio over the supplied policy pairs; it is
    an estimate of the all-policy supremum, which is also bounded by the
    returned trivial bound.
    """
    mu = check_distribution(mdp, mu)
    nu = check_distribution(mdp, nu)
    notes = []
    infinite = False
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(mu > 0, mu / nu, 0.0)
    rho = float(np.max(ratio))
    if not math.isfinite(rho):
        infinite = True
        notes.append("nu has zero mass where mu is positive")
    nu_min = float(nu.min())
    g = mdp.discount
    trivial = math.inf if nu_min == 0 else 1.0 / ((1.0 - g) * nu_min)
    rho_nu = 1.0
    dists = [visitation_distribution(mdp, pi, nu) for pi in policies]
    for d1 in dists:
        for d2 in dists:
            with np.errstate(divide="ignore", invalid="ignore"):
                r = np.where(d1 > 0, d1 / d2, 0.0)
            rho_nu = max(rho_nu, float(np.max(r)))
    if not math.isfinite(rho_nu):
        infinite = True
        notes.append("a visitation distribution has zero mass where another is positive")
    mu_min = float(mu.min())
    conc = math.inf if mu_min == 0 else max(1.0, float(nu.max()) / mu_min)
    if not math.isfinite(conc):
        notes.append("mu has zero entries; concentrability bound is infinite")
    return MismatchCoefficients(rho, rho_nu, trivial, conc, infinite, tuple(notes))
