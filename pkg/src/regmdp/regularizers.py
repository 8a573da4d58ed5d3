"""Convex per-state regularizers on the action simplex.

Four families are shipped:

``shifted-entropy``
    ``log|A| + sum p log p``; nonnegative, zero at the uniform distribution.
``raw-entropy``
    ``sum p log p``; nonpositive. Only the strong-duality check uses it.
``squared-l2``
    ``0.5 * ||p||^2``; smooth on the whole simplex.
``tsallis``
    ``(sum p^q - |A|^(1-q)) / (q (q-1))`` with index ``q`` in (1, 2];
    nonnegative and 1-strongly convex in l2.

All functions act on the last axis, so a whole policy table ``(S, A)``
can be passed at once.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import xlogy

from .config import TOL

KINDS = ("shifted-entropy", "raw-entropy", "squared-l2", "tsallis")


@dataclass(frozen=True)
class BoundConstants:
    c_phi: float
    c_phi_1: float
    c_phi_2: float


@dataclass(frozen=True)
class Regularizer:
    kind: str = "shifted-entropy"
    floor: float = 1e-6
    tsallis_index: float = 2.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown regularizer kind {self.kind!r}; expected one of {KINDS}")
        if not self.floor > 0:
            raise ValueError("interior floor must be positive")
        if self.kind == "tsallis" and not 1.0 < self.tsallis_index <= 2.0:
            raise ValueError("tsallis index must lie in (1, 2]")

    @property
    def is_entropy(self) -> bool:
        return self.kind in ("shifted-entropy", "raw-entropy")

    @property
    def sign_convention(self) -> str:
        return "nonpositive" if self.kind == "raw-entropy" else "nonnegative"

    @property
    def strong_convexity(self) -> tuple[float, str]:
        """Modulus and the norm it is stated in."""
        if self.is_entropy:
            return 1.0, "l1"
        return 1.0, "l2"

    @property
    def needs_floor(self) -> bool:
        """Whether gradients blow up at the simplex boundary."""
        return self.is_entropy or (self.kind == "tsallis" and self.tsallis_index < 2.0)

    def value(self, p):
        return eval_omega(self, p)

    def grad(self, p, floor=None):
        return grad_omega(self, p, floor=floor)

    def constants(self, num_actions: int, floor: float | None = None) -> BoundConstants:
        return bound_constants(self, num_actions, self.floor if floor is None else floor)


def _check_simplex(p):
    p = np.asarray(p, dtype=float)
    if p.ndim == 0:
        raise ValueError("distribution must have at least one axis")
    if np.any(~np.isfinite(p)):
        raise ValueError("distribution has non-finite entries")
    if np.any(p < -TOL.simplex_input):
        raise ValueError("distribution has negative entries")
    if np.any(np.abs(p.sum(axis=-1) - 1.0) > TOL.simplex_input):
        raise ValueError("distribution does not sum to one")
    return p


def clamp_to_floor(p, floor):
    """Clamp entries to ``floor`` and renormalise each row."""
    q = np.maximum(p, floor)
    return q / q.sum(axis=-1, keepdims=True)


def eval_omega(reg: Regularizer, p):
    """Regularizer value per row.

    Entropy values use the ``0 log 0 = 0`` convention, which is exact on the
    closed simplex, so no clamping is needed here.
    """
    return omega_unchecked(reg, _check_simplex(p))


def omega_unchecked(reg: Regularizer, p):
    """``eval_omega`` without the simplex validation, for solver inner loops."""
    n = p.shape[-1]
    if reg.kind == "shifted-entropy":
        return math.log(n) + xlogy(p, p).sum(axis=-1)
    if reg.kind == "raw-entropy":
        return xlogy(p, p).sum(axis=-1)
    if reg.kind == "squared-l2":
        return 0.5 * np.einsum("...a,...a->...", p, p)
    q = reg.tsallis_index
    return (np.power(np.maximum(p, 0.0), q).sum(axis=-1) - n ** (1.0 - q)) / (q * (q - 1.0))


def grad_omega(reg: Regularizer, p, floor=None):
    """Gradient of the regularizer, evaluated at the floored point when needed."""
    return grad_unchecked(reg, _check_simplex(p), floor)


def grad_unchecked(reg: Regularizer, p, floor=None):
    floor = reg.floor if floor is None else floor
    if reg.is_entropy:
        return np.log(clamp_to_floor(p, floor)) + 1.0
    if reg.kind == "squared-l2":
        return p.copy()
    q = reg.tsallis_index
    if q < 2.0:
        p = clamp_to_floor(p, floor)
    return np.power(np.maximum(p, 0.0), q - 1.0) / (q - 1.0)


def bregman(reg: Regularizer, p_new, p_old):
    """Bregman divergence ``D(p_new || p_old)`` per row."""
    p_new = _check_simplex(p_new)
    p_old = _check_simplex(p_old)
    if reg.is_entropy:
        # the linear term cancels the constant shift, leaving KL
        q = clamp_to_floor(p_old, reg.floor)
        return np.maximum(xlogy(p_new, p_new).sum(axis=-1) - (p_new * np.log(q)).sum(axis=-1), 0.0)
    d = (eval_omega(reg, p_new) - eval_omega(reg, p_old)
         - ((p_new - p_old) * grad_omega(reg, p_old)).sum(axis=-1))
    return np.maximum(d, 0.0)


def bound_constants(reg: Regularizer, num_actions: int, floor: float) -> BoundConstants:
    """Bounds on |omega|, its gradient (sup-norm) and Hessian on the floored simplex."""
    if num_actions < 1:
        raise ValueError("num_actions must be positive")
    if not 0.0 < floor < 1.0 / num_actions:
        raise ValueError("floor must lie in (0, 1/|A|)")
    n = num_actions
    if reg.is_entropy:
        return BoundConstants(math.log(n), max(abs(math.log(floor) + 1.0), 1.0), 1.0 / floor)
    if reg.kind == "squared-l2":
        return BoundConstants(0.5, 1.0, 1.0)
    q = reg.tsallis_index
    c_phi = (1.0 - n ** (1.0 - q)) / (q * (q - 1.0))
    c_phi_1 = 1.0 / (q - 1.0)
    c_phi_2 = 1.0 if q == 2.0 else floor ** (q - 2.0)
    return BoundConstants(c_phi, c_phi_1, c_phi_2)


def from_spec(spec) -> Regularizer:
    """Build a regularizer from a config entry: a name or a mapping."""
    if isinstance(spec, str):
        return Regularizer(spec)
    spec = dict(spec)
    kind = spec.pop("kind", spec.pop("name", "shifted-entropy"))
    return Regularizer(kind, **spec)
