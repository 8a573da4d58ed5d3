"""First-order policy solvers: exact gradients, projected ascent, softmax PG, MDPO."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import log_softmax, softmax

from . import mdp as core
from .regularizers import Regularizer, grad_unchecked, omega_unchecked
from .trace import SolverTrace


def simplex_project(points, floor: float = 0.0) -> np.ndarray:
    """Euclidean projection of each row onto ``{p >= floor, sum p = 1}``.

    Sort-and-threshold on the shifted problem; ``floor=0`` is the plain simplex.
    """
    x = np.asarray(points, dtype=float)
    flat = x.ndim == 1
    x = np.atleast_2d(x)
    n = x.shape[1]
    if floor:
        if floor * n >= 1.0:
            raise ValueError("floor too large for the number of actions")
        x = x - floor
    z = 1.0 - floor * n
    u = -np.sort(-x, axis=1)
    css = np.cumsum(u, axis=1) - z
    ind = np.arange(1, n + 1)
    cond = u - css / ind > 0
    rho = np.count_nonzero(cond, axis=1)
    theta = css[np.arange(x.shape[0]), rho - 1] / rho
    out = np.maximum(x - theta[:, None], 0.0) + floor
    return out[0] if flat else out


@dataclass(frozen=True)
class PolicyEval:
    """Everything a first-order step needs, from one policy evaluation."""
    values: np.ndarray  # V_lam^pi
    q: np.ndarray  # Q_lam^pi
    visitation: np.ndarray  # d_{pi, start}
    objective: float  # J_start(pi, lam)


def evaluate(mdp, pi, reg, lam, start) -> PolicyEval:
    """Values, Q-values and visitation of a policy already known to be valid."""
    g = mdp.discount
    M = np.eye(mdp.num_states) - g * core.policy_matrix(mdp, pi)
    reward = (pi * mdp.reward).sum(axis=1)
    if lam:
        reward = reward - lam * omega_unchecked(reg, pi)
    v = np.linalg.solve(M, reward)
    d = (1.0 - g) * np.linalg.solve(M.T, start)
    return PolicyEval(v, core.q_from_values(mdp, v), d, float(start @ v))


def exact_gradient(mdp, pi, reg: Regularizer | None, lam: float, nu=None, floor=None) -> np.ndarray:
    """``dJ_nu/dpi(a|s) = d_{pi,nu}(s) (Q_lam^pi(s,a) - lam dOmega/dpi(a|s)) / (1-g)``."""
    pi = core.check_policy(mdp, pi)
    nu = mdp.mu if nu is None else core.check_distribution(mdp, nu)
    return _gradient(mdp, pi, reg, lam, evaluate(mdp, pi, reg, lam, nu), floor)


def _gradient(mdp, pi, reg, lam, ev: PolicyEval, floor=None):
    inner = ev.q
    if lam:
        inner = inner - lam * grad_unchecked(reg, pi, floor)
    return ev.visitation[:, None] * inner / (1.0 - mdp.discount)


@dataclass(frozen=True)
class SmoothnessEstimate:
    l_lambda: float
    unregularized: float
    regularized: float


def smoothness_constant(mdp, reg: Regularizer | None, lam: float, floor=None) -> SmoothnessEstimate:
    """Closed-form smoothness of ``J(., lam)`` on the (floored) simplex.

    Rewards are assumed in ``[0, r_max]``; the unregularized part scales with
    ``r_max``.
    """
    g = mdp.discount
    A = mdp.num_actions
    base = 4.0 * g * A * mdp.r_max / (1.0 - g) ** 3
    if not lam:
        return SmoothnessEstimate(base, base, 0.0)
    c = reg.constants(A, floor)
    extra = lam * (4 * g * A * c.c_phi + 2 * (1 - g) * math.sqrt(A) * c.c_phi_1
                   + (1 - g) ** 2 * c.c_phi_2) / (1.0 - g) ** 3
    return SmoothnessEstimate(base + extra, base, extra)


def gradient_mapping_norm(pi, nxt, eta):
    return float(np.linalg.norm(nxt - pi) / eta)


def pga(mdp, reg: Regularizer | None, lam: float, init, nu=None, step="auto", T: int = 100,
        floor=None, reference=None, stop=None, record_every: int = 1, monitor=None):
    """Projected gradient ascent on ``J_nu(., lam)``.

    The iterate stays on the simplex floored at ``floor`` (the regularizer's
    floor for log-type regularizers, zero otherwise). ``reference`` is an
    optional ``V_lam^*`` used to log true gaps under mu; ``stop(t, pi, ev)``
    may end the run early and ``monitor(pi)`` adds columns to every logged
    row. Returns the final policy and a trace whose
    ``best_index`` is the iteration with the highest ``J_nu``.

    Every step also checks the quadratic improvement inequality
    ``J(next) - J(cur) >= (2 - eta L) / (2 eta) ||next - cur||^2`` with the
    closed-form ``L``; the smallest slack is kept as ``trace.min_slack``.
    """
    pi = core.check_policy(mdp, init)
    nu = mdp.mu if nu is None else core.check_distribution(mdp, nu)
    if floor is None:
        floor = reg.floor if (lam and reg is not None and reg.needs_floor) else 0.0
    L = smoothness_constant(mdp, reg, lam, floor or None).l_lambda
    if step == "auto":
        eta = 1.0 / L
    else:
        eta = float(step)
        if not eta > 0:
            raise ValueError("step size must be positive")
    if floor:
        pi = simplex_project(pi, floor)
    trace = SolverTrace("pga", lam)
    trace.step = eta
    trace.smoothness = L
    coef = (2.0 - eta * L) / (2.0 * eta)
    min_slack = math.inf
    ev = evaluate(mdp, pi, reg, lam, nu)
    best = (ev.objective, 0, pi)
    def log(t, **extra):
        trace.log(t, objective=ev.objective, objective_mu=_mu_value(mdp, ev, nu),
                  gap=_gap(reference, ev, mdp, nu), **extra, **(monitor(pi) if monitor else {}))

    log(0, grad_norm=None, step_sq=None, slack=None)
    status = "completed"
    for t in range(T):
        grad = _gradient(mdp, pi, reg, lam, ev, floor or None)
        nxt = simplex_project(pi + eta * grad, floor)
        nxt_ev = evaluate(mdp, nxt, reg, lam, nu)
        diff = nxt - pi
        step_sq = float(np.sum(diff * diff))
        gm = math.sqrt(step_sq) / eta
        slack = nxt_ev.objective - ev.objective - coef * step_sq
        min_slack = min(min_slack, slack)
        pi, ev = nxt, nxt_ev
        if ev.objective > best[0]:
            best = (ev.objective, t + 1, pi)
        if (t + 1) % record_every == 0 or t + 1 == T:
            log(t + 1, grad_norm=gm, step_sq=step_sq, slack=slack)
        if stop is not None and stop(t + 1, pi, ev):
            if trace.rows[-1]["iteration"] != t + 1:
                log(t + 1, grad_norm=gm, step_sq=step_sq, slack=slack)
            status = "stopped"
            break
    trace.status = status
    trace.min_slack = min_slack
    trace.best_index = best[1]
    trace.best_policy = best[2]
    return pi, trace


def _mu_value(mdp, ev, nu):
    return float(mdp.mu @ ev.values)


def _gap(reference, ev, mdp, nu):
    if reference is None:
        return None
    return float(mdp.mu @ (reference - ev.values))


def softmax_policy(theta) -> np.ndarray:
    return softmax(np.asarray(theta, dtype=float), axis=1)


def softmax_gradient(mdp, theta, reg: Regularizer, lam: float, start=None):
    """Gradient of ``J(pi_theta, lam)`` in logit space and the objective value.

    Composes the simplex gradient with the softmax Jacobian
    ``dpi(a|s)/dtheta(s,b) = pi(a|s)(1{a=b} - pi(b|s))``. The entropy gradient
    is taken at the exact (unclamped) policy via log-softmax.
    """
    theta = np.asarray(theta, dtype=float)
    start = mdp.mu if start is None else core.check_distribution(mdp, start)
    pi = softmax(theta, axis=1)
    ev = evaluate(mdp, pi, reg, lam, start)
    inner = ev.q
    if lam:
        inner = inner - lam * (log_softmax(theta, axis=1) + 1.0)
    g_pi = ev.visitation[:, None] * inner / (1.0 - mdp.discount)
    g_theta = pi * (g_pi - (pi * g_pi).sum(axis=1, keepdims=True))
    return g_theta, ev


def softmax_pg_step(mdp, reg: Regularizer, lam: float) -> float:
    """Step size ``(1-g)^3 / (8 + lam (4 + 8 log|A|))``."""
    return (1.0 - mdp.discount) ** 3 / (8.0 + lam * (4.0 + 8.0 * math.log(mdp.num_actions)))


def softmax_pg(mdp, reg: Regularizer, lam: float, init_theta, step="auto", T: int = 1000,
               reference=None, stop=None, record_every: int = 1, monitor=None):
    """Gradient ascent on softmax logits for the entropy-regularized objective under mu.

    The trace keeps the running minimum policy probability (``min_prob``),
    an estimate of the trajectory constant the convergence rate depends on.
    """
    if lam and not reg.is_entropy:
        raise NotImplementedError("softmax policy gradient supports the entropy family only")
    theta = np.array(init_theta, dtype=float)
    if theta.shape != (mdp.num_states, mdp.num_actions):
        raise ValueError("logit table shape does not match the MDP")
    eta = softmax_pg_step(mdp, reg, lam) if step == "auto" else float(step)
    if not eta > 0:
        raise ValueError("step size must be positive")
    trace = SolverTrace("softmax_pg", lam)
    trace.step = eta
    g, ev = softmax_gradient(mdp, theta, reg, lam)
    pi = softmax(theta, axis=1)
    c_est = float(pi.min())

    def log(t):
        trace.log(t, objective=ev.objective, gap=_gap(reference, ev, mdp, None), min_prob=c_est,
                  grad_norm=float(np.linalg.norm(g)), **(monitor(pi) if monitor else {}))

    log(0)
    status = "completed"
    for t in range(T):
        theta = theta + eta * g
        g, ev = softmax_gradient(mdp, theta, reg, lam)
        pi = softmax(theta, axis=1)
        c_est = min(c_est, float(pi.min()))
        if (t + 1) % record_every == 0 or t + 1 == T:
            log(t + 1)
        if stop is not None and stop(t + 1, pi, ev):
            status = "stopped"
            break
    trace.status = status
    return theta, trace


def mdpo_update(mdp, reg: Regularizer, lam: float, pi, eta: float) -> np.ndarray:
    """Closed-form KL-proximal update ``pi' ∝ pi^(1 - lam eta) exp(eta Q_lam^pi)``."""
    if not reg.is_entropy:
        raise NotImplementedError("the closed-form update needs an entropy regularizer")
    if not eta > 0:
        raise ValueError("eta must be positive")
    keep = 1.0 - lam * eta
    if keep < -1e-12:
        raise ValueError("lam * eta > 1 is outside the closed-form derivation")
    pi = core.check_policy(mdp, pi)
    logits = eta * core.q_values(mdp, pi, reg, lam)
    if keep > 1e-15:
        with np.errstate(divide="ignore"):
            logits = logits + keep * np.log(pi)
    return softmax(logits, axis=1)
