"""Regularized Bellman operators and dynamic-programming solvers."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp, softmax

from . import mdp as core
from .config import TOL
from .gradients import simplex_project
from .regularizers import Regularizer
from .trace import SolverTrace

INFINITE = "infinite"


@dataclass(frozen=True)
class BellmanConfig:
    eval_steps: int | str = INFINITE
    greedy_tolerance: float = 0.0
    max_iterations: int = 1000
    convergence_tolerance: float = 1e-12
    # add +eps0 to every evaluation step instead of treating eps0 as a bound
    adversarial: bool = False

    def __post_init__(self):
        if self.greedy_tolerance < 0:
            raise ValueError("greedy tolerance must be nonnegative")
        if self.eval_steps != INFINITE and (not isinstance(self.eval_steps, int) or self.eval_steps < 1):
            raise ValueError("eval_steps must be a positive integer or 'infinite'")


def apply_bellman(mdp, pi, reg: Regularizer | None, lam: float, v) -> np.ndarray:
    """One application of the regularized evaluation operator."""
    pi = core.check_policy(mdp, pi)
    v = np.asarray(v, dtype=float)
    if v.shape != (mdp.num_states,):
        raise ValueError(f"value shape {v.shape} does not match {mdp.num_states} states")
    out = (pi * core.q_from_values(mdp, v)).sum(axis=1)
    if lam:
        out = out - lam * reg.value(pi)
    return out


def _greedy_rows(q, reg: Regularizer | None, lam: float, tolerance: float):
    """Per-row maximiser of ``<p, q> - lam * omega(p)`` and its value."""
    S, A = q.shape
    if lam == 0:
        pi = np.zeros_like(q)
        pi[np.arange(S), np.argmax(q, axis=1)] = 1.0
        return pi, q.max(axis=1)
    if reg.is_entropy:
        pi = softmax(q / lam, axis=1)
        val = lam * logsumexp(q / lam, axis=1)
        if reg.kind == "shifted-entropy":
            val = val - lam * math.log(A)
        return pi, val
    if reg.kind == "squared-l2" or (reg.kind == "tsallis" and reg.tsallis_index == 2.0):
        # <p,q> - lam/2 ||p||^2 is maximised by the projection of q/lam
        pi = simplex_project(q / lam)
    else:
        pi = _projected_ascent_rows(q, reg, lam, tolerance)
    val = (pi * q).sum(axis=1) - lam * reg.value(pi)
    return pi, val


def _projected_ascent_rows(q, reg, lam, tolerance, max_steps=100000):
    """Inner projected-gradient solver for regularizers without a closed form.

    Step is the inverse curvature of the per-state objective on the floored
    simplex; stops when the projected step is small enough that the
    suboptimality bound ``||step|| * diameter / eta`` is below tolerance.
    """
    A = q.shape[1]
    floor = reg.floor
    curvature = lam * reg.constants(A).c_phi_2
    eta = 1.0 / curvature
    p = np.full(q.shape, 1.0 / A)
    target = max(tolerance, 1e-13)
    for _ in range(max_steps):
        g = q - lam * reg.grad(p)
        nxt = simplex_project(p + eta * g, floor=floor)
        step = np.abs(nxt - p).max()
        p = nxt
        if step * math.sqrt(2.0) * A / eta <= target:
            break
    return p


def greedy_values(mdp, reg: Regularizer | None, lam: float, v) -> np.ndarray:
    """``max_pi [T_lam^pi v](s)`` for every state."""
    _, val = _greedy_rows(core.q_from_values(mdp, v), reg, lam, 0.0)
    return val


def regularized_greedy(mdp, reg: Regularizer | None, lam: float, v, tolerance: float = 0.0) -> np.ndarray:
    """Policy maximising the regularized one-step lookahead of ``v`` in every state.

    Ties at ``lam = 0`` go to the lowest action index.
    """
    if lam < 0:
        raise ValueError("lambda must be nonnegative")
    v = np.asarray(v, dtype=float)
    pi, _ = _greedy_rows(core.q_from_values(mdp, v), reg, lam, tolerance)
    return pi


def soft_optimal_oracle(mdp, reg: Regularizer | None, lam: float, tolerance: float = TOL.oracle):
    """Fixed point of the regularized optimality operator by value iteration.

    Returns ``(pi_star, v_star)`` where the sup-norm residual of ``v_star`` is
    at most ``tolerance``.
    """
    if lam < 0:
        raise ValueError("lambda must be nonnegative")
    g = mdp.discount
    v = np.zeros(mdp.num_states)
    span = (mdp.r_max + (lam * reg.constants(mdp.num_actions).c_phi if lam else 0.0)) / (1.0 - g)
    if g > 0:
        budget = int(math.ceil(math.log(max(tolerance * (1.0 - g), 1e-300) / max(span, 1e-300)) / math.log(g))) + 10
    else:
        budget = 2
    for _ in range(max(budget, 2)):
        nxt = greedy_values(mdp, reg, lam, v)
        res = np.max(np.abs(nxt - v))
        v = nxt
        if res <= tolerance:
            break
    pi, _ = _greedy_rows(core.q_from_values(mdp, v), reg, lam, 0.0)
    return pi, v


def _evaluate(mdp, pi, reg, lam, v, m):
    if m == INFINITE:
        return core.regularized_value(mdp, pi, reg, lam)
    for _ in range(m):
        v = apply_bellman(mdp, pi, reg, lam, v)
    return v


def rmpi(mdp, reg: Regularizer | None, lam: float, init, cfg: BellmanConfig = BellmanConfig(),
         reference=None, iterations: int | None = None, stop=None, monitor=None):
    """Regularized modified policy iteration.

    Starts from ``V_0 = V_lam^{init}``; each iteration takes an ``eps0``-greedy
    policy and applies ``m`` evaluation sweeps (exact evaluation when
    ``m='infinite'``). ``reference`` is an optional ``V_lam^*`` used to log
    true gaps. With ``iterations`` set, at most that many iterations run;
    ``stop(k, pi, v)`` may end the run early.
    """
    init = core.check_policy(mdp, init)
    eps0 = cfg.greedy_tolerance
    trace = SolverTrace("rmpi", lam)
    pi = init
    v = core.regularized_value(mdp, pi, reg, lam)
    trace.log(0, objective=float(mdp.mu @ v), gap=_gap(mdp, reference, pi, reg, lam),
              **(monitor(pi) if monitor else {}))
    n_iter = cfg.max_iterations if iterations is None else iterations
    status = "budget"
    for k in range(n_iter):
        new_pi = regularized_greedy(mdp, reg, lam, v, eps0)
        new_v = _evaluate(mdp, new_pi, reg, lam, v, cfg.eval_steps)
        if cfg.adversarial and eps0:
            new_v = new_v + eps0
        change = float(np.max(np.abs(new_v - v)))
        pi, v = new_pi, new_v
        trace.log(k + 1, objective=float(mdp.mu @ core.regularized_value(mdp, pi, reg, lam)),
                  gap=_gap(mdp, reference, pi, reg, lam), **(monitor(pi) if monitor else {}))
        if stop is not None and stop(k + 1, pi, v):
            status = "stopped"
            break
        if iterations is None and change <= cfg.convergence_tolerance:
            status = "converged"
            break
    else:
        if iterations is not None:
            status = "completed"
    trace.status = status
    return pi, trace


def _gap(mdp, reference, pi, reg, lam):
    if reference is None:
        return None
    return float(np.max(reference - core.regularized_value(mdp, pi, reg, lam)))


def rmpi_alternating(mdp, reg: Regularizer, lambda0: float, init_v, init_policy, T: int, eps0: float = 0.0):
    """Alternate one evaluation sweep, a halving of lambda and one greedy step."""
    init_policy = core.check_policy(mdp, init_policy)
    trace = SolverTrace("rmpi_alternating", lambda0)
    if mdp.discount ** 2 < 0.5:
        trace.flags.append("discount^2 < 1/2: convergence bound precondition unmet")
    v = np.asarray(init_v, dtype=float)
    pi = init_policy
    lam = lambda0
    trace.log(0, lam=lam)
    for t in range(T):
        v = apply_bellman(mdp, pi, reg, lam, v) + eps0
        lam = lambda0 * 2.0 ** -(t + 1)
        pi = regularized_greedy(mdp, reg, lam, v, eps0)
        trace.log(t + 1, lam=lam)
    return pi, trace


def alternating_bound(gamma, lambda0, c_phi, eps0, T, initial_error):
    """Error bound for the alternating scheme, valid when ``gamma^2 >= 1/2``."""
    g = gamma
    return (4 * g ** T * lambda0 * c_phi / (1 - g) ** 2 + 2 * eps0 / (1 - g) ** 2
            + 2 * g ** (T + 1) * initial_error / (1 - g))
