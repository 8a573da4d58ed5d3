"""Vectorised numpy rollout kernels; the fallback when the compiled module is absent.

Both backends consume the same uniform matrix column by column and use the
same inverse-CDF rule (first index whose cumulative weight exceeds ``u``),
so they return bit-identical results.
"""

import numpy as np


def _inverse_cdf(table, rows, u):
    # cdf entries are clipped to 2.0 from the last positive index on
    return np.count_nonzero(table[rows] <= u[:, None], axis=1)


def sample_starts(nu_cdf, pi_cdf, p_cdf, num_actions, accept, horizon, U, col0):
    """Geometric-acceptance start states with forced acceptance after ``horizon`` steps.

    Column layout from ``col0``: one column for the draw from ``nu`` and three
    per step (accept test, action, transition).
    """
    n = U.shape[0]
    s = np.count_nonzero(nu_cdf[None, :] <= U[:, col0][:, None], axis=1)
    active = np.ones(n, dtype=bool)
    for k in range(horizon):
        c = col0 + 1 + 3 * k
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        stay = U[idx, c] < accept
        active[idx[stay]] = False
        idx = idx[~stay]
        if idx.size == 0:
            break
        a = _inverse_cdf(pi_cdf, s[idx], U[idx, c + 1])
        s[idx] = _inverse_cdf(p_cdf, s[idx] * num_actions + a, U[idx, c + 2])
    return s.astype(np.int64)


def rollout(s0, a0, reward, pi_cdf, p_cdf, num_actions, pen, disc, horizon, U, col0, include_t0):
    """Truncated discounted penalised returns from ``(s0, a0)``.

    ``q = R(s0,a0) + sum_{t=1}^{K-1} disc[t] (R(s_t,a_t) - pen[s_t])``, with
    ``-pen[s0]`` added at ``t=0`` when ``include_t0`` is set. Column ``col0``
    is the first transition; step ``t >= 1`` uses ``2t-1`` (action) and
    ``2t`` (transition).
    """
    s = np.asarray(s0, dtype=np.int64)
    a = np.asarray(a0, dtype=np.int64)
    q = reward[s, a].copy()
    if include_t0:
        q = q - pen[s]
    if horizon <= 1:
        return q
    s = _inverse_cdf(p_cdf, s * num_actions + a, U[:, col0])
    for t in range(1, horizon):
        a = _inverse_cdf(pi_cdf, s, U[:, col0 + 2 * t - 1])
        q = q + disc[t] * (reward[s, a] - pen[s])
        if t < horizon - 1:
            s = _inverse_cdf(p_cdf, s * num_actions + a, U[:, col0 + 2 * t])
    return q
