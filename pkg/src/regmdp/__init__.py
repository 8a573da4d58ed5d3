"""Tabular regularized-MDP solvers with temperature-halving reduction."""

from .mdp import TabularMdp, MdpValidationError, evaluate_policy, regularized_value, objective
from .regularizers import Regularizer

__version__ = "0.1.0"

__all__ = ["TabularMdp", "MdpValidationError", "Regularizer", "evaluate_policy",
           "regularized_value", "objective"]
