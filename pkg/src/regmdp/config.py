"""Numeric tolerances shared by every module."""

from dataclasses import dataclass


@dataclass(frozen=True)
class Tolerances:
    row_sum: float = 1e-12
    policy_row_sum: float = 1e-10
    simplex_input: float = 1e-8
    visitation_sum: float = 1e-10
    bellman_consistency: float = 1e-9
    linear_residual: float = 1e-12
    oracle: float = 1e-11
    # measured gaps below this are reported as exactly zero
    gap_floor: float = 1e-12
    # dense factorisation up to this many states, iterative beyond
    dense_max_states: int = 2000


TOL = Tolerances()
