"""Temperature-halving reduction over a warm-started sub-solver.

Each epoch ``t`` solves the problem regularized at ``lam_t = lam0 / 2^t``
starting from the previous epoch's output. Sub-solvers promise either a
relative contraction of the gap (``prop1``) or an absolute gap target
(``prop2``); with the oracle certification mode the promise is checked
against the soft-optimal values, otherwise the per-epoch budget is trusted.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import bellman, gradients
from . import mdp as core
from .config import TOL
from .regularizers import Regularizer

SOLVERS = ("rmpi", "pga", "softmax_pg", "mdpo")
BUDGETS = ("fixed", "formula", "certified")
CERTIFICATION = ("oracle-gap", "theoretical-budget")


class ReductionConfigError(ValueError):
    """Incompatible solver, budget or regularizer combination."""


@dataclass(frozen=True)
class StoppingRule:
    kind: str = "prop1"
    epsilon_hat: float = 0.0
    contraction_factor: float = 0.25

    def __post_init__(self):
        if self.kind not in ("prop1", "prop2"):
            raise ValueError(f"unknown stopping rule {self.kind!r}")
        if not 0.0 < self.contraction_factor < 1.0:
            raise ValueError("contraction factor must lie in (0, 1)")
        if self.epsilon_hat < 0:
            raise ValueError("epsilon_hat must be nonnegative")


@dataclass(frozen=True)
class SubSolverBinding:
    """Which sub-solver runs inside each epoch and how long it may run.

    ``budget``:
      * ``fixed``: exactly ``iterations`` per epoch
      * ``formula``: the closed-form epoch time for the solver
      * ``certified``: until the stopping rule holds, capped at ``iterations``
    """
    solver: str = "rmpi"
    budget: str = "certified"
    iterations: int = 1000
    certification: str = "oracle-gap"
    step: float | str = "auto"
    eval_steps: int | str = bellman.INFINITE
    greedy_tolerance: float = 0.0
    mdpo_eta: float | None = None  # None means 1/lam, the greedy special case
    nu: tuple | None = None
    rho_nu: float | None = None
    concentrability: float | None = None
    record_every: int = 1

    def __post_init__(self):
        if self.solver not in SOLVERS:
            raise ReductionConfigError(f"unknown sub-solver {self.solver!r}")
        if self.budget not in BUDGETS:
            raise ReductionConfigError(f"unknown budget policy {self.budget!r}")
        if self.certification not in CERTIFICATION:
            raise ReductionConfigError(f"unknown certification mode {self.certification!r}")
        if not isinstance(self.iterations, int) or self.iterations < 1:
            raise ReductionConfigError("iteration budget must be a positive integer")
        if self.budget == "certified" and self.certification != "oracle-gap":
            raise ReductionConfigError("run-until-certified needs oracle-gap certification")
        if self.budget == "formula" and self.solver == "softmax_pg":
            raise ReductionConfigError("softmax policy gradient has no closed-form epoch time")
        if self.budget == "formula" and self.solver == "mdpo" and self.mdpo_eta is not None:
            raise ReductionConfigError("closed-form epoch time only covers mdpo with eta = 1/lam")

    def check_regularizer(self, reg: Regularizer):
        if self.solver in ("softmax_pg", "mdpo") and not reg.is_entropy:
            raise ReductionConfigError(f"{self.solver} needs an entropy regularizer")


@dataclass
class EpochRecord:
    t: int
    lam: float
    gap_before: float  # D_t, measured under mu at lam_t
    gap_after: float
    target: float
    iterations: int
    certified: bool | None
    status: str


@dataclass
class ReductionReport:
    lambda0: float
    c_phi: float
    discount: float
    rule: StoppingRule
    binding: SubSolverBinding
    d0: float = 0.0
    epochs: list = field(default_factory=list)
    final_gap: float = 0.0
    bound: float = 0.0
    traces: list = field(default_factory=list)

    @property
    def total_iterations(self) -> int:
        return sum(e.iterations for e in self.epochs)

    @property
    def all_certified(self) -> bool:
        return all(e.certified for e in self.epochs)

    @property
    def measured_eps_hat(self) -> float:
        """Smallest slack that makes every epoch satisfy its property."""
        slack = 0.0
        for e in self.epochs:
            base = e.target - self.rule.epsilon_hat
            slack = max(slack, e.gap_after - base)
        return slack

    def to_dict(self) -> dict:
        return {
            "lambda0": self.lambda0,
            "c_phi": self.c_phi,
            "discount": self.discount,
            "rule": asdict(self.rule),
            "binding": asdict(self.binding),
            "d0": self.d0,
            "epochs": [asdict(e) for e in self.epochs],
            "final_gap": self.final_gap,
            "bound": self.bound,
            "total_iterations": self.total_iterations,
        }


def measured_gap(v_star, values, weights) -> float:
    """``weights . (v_star - values)`` clamped to zero below the oracle noise floor."""
    gap = float(weights @ (v_star - values))
    return gap if gap > TOL.gap_floor else 0.0


def prop1_certify(gap_before: float, gap_after: float, rule: StoppingRule) -> bool:
    if gap_before < 0 or gap_after < 0:
        raise ValueError("gaps must be nonnegative")
    return gap_after <= rule.contraction_factor * gap_before + rule.epsilon_hat


def prop2_target(lambda0: float, c_phi: float, gamma: float, t: int) -> float:
    """Absolute epoch-``t`` accuracy ``lam0 C / (2^t (1-g))``."""
    if t < 0:
        raise ValueError("epoch index must be nonnegative")
    return math.ldexp(lambda0, -t) * c_phi / (1.0 - gamma)


def pga_epoch_budget(mdp_dims, rho_nu, l_lambda_t, lambda0, c_phi, gamma, t) -> int:
    """``ceil(128 |S| rho_nu^2 L_t (1-g) 2^t / (lam0 C))``."""
    S = mdp_dims[0] if isinstance(mdp_dims, (tuple, list)) else int(mdp_dims)
    for name, x in (("rho_nu", rho_nu), ("l_lambda_t", l_lambda_t), ("lambda0", lambda0), ("c_phi", c_phi)):
        if not x > 0:
            raise ValueError(f"{name} must be positive")
    return int(math.ceil(128 * S * rho_nu ** 2 * l_lambda_t * (1.0 - gamma) * 2.0 ** t / (lambda0 * c_phi)))


def rmpi_epoch_budget(concentrability: float, gamma: float) -> int:
    """``ceil(ln(8C/(1-g)) / ln(1/g))``, independent of lambda."""
    if gamma == 0:
        return 1
    return max(1, int(math.ceil(math.log(8.0 * concentrability / (1.0 - gamma)) / math.log(1.0 / gamma))))


def theorem1_bound(d0, lambda0, c_phi, gamma, eps_hat, T) -> float:
    if T == math.inf:
        return 4.0 / 3.0 * eps_hat
    return d0 / 4.0 ** T + 4.0 / 3.0 * eps_hat + 6.0 * lambda0 * c_phi / ((1.0 - gamma) * 2.0 ** T)


def theorem2_bound(lambda0, c_phi, gamma, eps_hat, T) -> float:
    if T == math.inf:
        return eps_hat
    return 6.0 * lambda0 * c_phi / ((1.0 - gamma) * 2.0 ** T) + eps_hat


def recursion_bound(d_prev, lambda0, c_phi, gamma, eps_hat, t) -> float:
    """Warm-start bound ``D_t <= D_{t-1}/4 + eps_hat + lam0 2^(1-t) C/(1-g)``."""
    return 0.25 * d_prev + eps_hat + lambda0 * 2.0 ** (1 - t) * c_phi / (1.0 - gamma)


def epochs_for_accuracy(eps, lambda0, c_phi, gamma) -> int:
    """Smallest ``T`` with ``6 lam0 C / ((1-g) 2^T) <= eps``."""
    if not eps > 0:
        raise ValueError("eps must be positive")
    return max(0, int(math.ceil(math.log2(6.0 * lambda0 * c_phi / (eps * (1.0 - gamma))))))


def _epoch_budget(binding, mdp, reg, lam, lambda0, c_phi, t, nu):
    if binding.budget != "formula":
        return binding.iterations
    g = mdp.discount
    if binding.solver in ("rmpi", "mdpo"):
        conc = binding.concentrability
        if conc is None:
            conc = core.mismatch_diagnostics(mdp, mdp.mu, nu).concentrability
        return rmpi_epoch_budget(conc, g)
    rho_nu = binding.rho_nu
    if rho_nu is None:
        rho_nu = core.mismatch_diagnostics(mdp, mdp.mu, nu).rho_nu_trivial
    floor = reg.floor if reg.needs_floor else None
    L = gradients.smoothness_constant(mdp, reg, lam, floor).l_lambda
    return pga_epoch_budget(mdp.num_states, rho_nu, L, lambda0, c_phi, g, t)


def run_subsolver(binding, mdp, reg, lam, pi, n, nu, v_star=None, stop=None, monitor=None):
    """Run the bound sub-solver for at most ``n`` iterations from ``pi``.

    ``stop(pi, values)`` receives the iterate and its regularized values.
    Returns ``(policy, iterations, trace)``.
    """
    if binding.solver == "rmpi":
        cfg = bellman.BellmanConfig(eval_steps=binding.eval_steps, greedy_tolerance=binding.greedy_tolerance,
                                    max_iterations=n)
        cb = None if stop is None else (lambda k, p, v: stop(p, core.regularized_value(mdp, p, reg, lam)))
        out, tr = bellman.rmpi(mdp, reg, lam, pi, cfg, reference=v_star, iterations=n, stop=cb,
                               monitor=monitor)
        return out, tr.iterations, tr
    if binding.solver == "pga":
        cb = None if stop is None else (lambda k, p, ev: stop(p, ev.values))
        out, tr = gradients.pga(mdp, reg, lam, pi, nu=nu, step=binding.step, T=n, reference=v_star,
                                stop=cb, record_every=binding.record_every, monitor=monitor)
        return out, tr.iterations, tr
    if binding.solver == "softmax_pg":
        theta = np.log(np.maximum(pi, 1e-300))
        cb = None if stop is None else (lambda k, p, ev: stop(p, ev.values))
        theta, tr = gradients.softmax_pg(mdp, reg, lam, theta, step=binding.step, T=n, reference=v_star,
                                         stop=cb, record_every=binding.record_every, monitor=monitor)
        return gradients.softmax_policy(theta), tr.iterations, tr
    # mdpo
    from .trace import SolverTrace
    eta = 1.0 / lam if binding.mdpo_eta is None else binding.mdpo_eta
    tr = SolverTrace("mdpo", lam)
    k = 0
    for k in range(1, n + 1):
        pi = gradients.mdpo_update(mdp, reg, lam, pi, eta)
        v = core.regularized_value(mdp, pi, reg, lam)
        tr.log(k, objective=float(mdp.mu @ v),
               gap=None if v_star is None else float(mdp.mu @ (v_star - v)),
               **(monitor(pi) if monitor else {}))
        if stop is not None and stop(pi, v):
            tr.status = "stopped"
            break
    else:
        tr.status = "completed"
    return pi, k, tr


def adapt_reduce(mdp, reg: Regularizer, lambda0: float, init, binding: SubSolverBinding,
                 rule: StoppingRule = StoppingRule(), T: int = 10, keep_traces: bool = False,
                 monitor=None):
    """Run ``T`` halving epochs and report measured gaps against the bound.

    Gaps are measured under mu with the soft-optimal oracle in every mode;
    only the ``certified`` budget uses them to stop the sub-solver.
    """
    if not lambda0 > 0:
        raise ValueError("lambda0 must be positive")
    if T < 0:
        raise ValueError("T must be nonnegative")
    binding.check_regularizer(reg)
    pi = core.check_policy(mdp, init)
    nu = mdp.mu if binding.nu is None else core.check_distribution(mdp, np.asarray(binding.nu, dtype=float))
    g = mdp.discount
    c_phi = reg.constants(mdp.num_actions).c_phi
    mu = mdp.mu
    report = ReductionReport(lambda0, c_phi, g, rule, binding)
    _, v0 = bellman.soft_optimal_oracle(mdp, reg, lambda0)
    report.d0 = measured_gap(v0, core.regularized_value(mdp, pi, reg, lambda0), mu)

    for t in range(T):
        lam = math.ldexp(lambda0, -t)
        v_star = v0 if t == 0 else bellman.soft_optimal_oracle(mdp, reg, lam)[1]
        before = measured_gap(v_star, core.regularized_value(mdp, pi, reg, lam), mu)
        if rule.kind == "prop1":
            target = rule.contraction_factor * before + rule.epsilon_hat
        else:
            target = prop2_target(lambda0, c_phi, g, t) + rule.epsilon_hat
        n = _epoch_budget(binding, mdp, reg, lam, lambda0, c_phi, t, nu)
        if binding.budget == "certified":
            if before <= target:
                report.epochs.append(EpochRecord(t, lam, before, before, target, 0, True, "already-certified"))
                continue
            stop = lambda p, v: measured_gap(v_star, v, mu) <= target  # noqa: E731
        else:
            stop = None
        pi, used, tr = run_subsolver(binding, mdp, reg, lam, pi, n, nu, v_star, stop, monitor)
        after = measured_gap(v_star, core.regularized_value(mdp, pi, reg, lam), mu)
        certified = after <= target if binding.certification == "oracle-gap" else None
        status = tr.status if binding.budget != "certified" or certified else "uncertified"
        report.epochs.append(EpochRecord(t, lam, before, after, target, used, certified, status))
        if keep_traces:
            report.traces.append(tr)

    _, v_opt = bellman.soft_optimal_oracle(mdp, reg, 0.0)
    report.final_gap = measured_gap(v_opt, core.evaluate_policy(mdp, pi), mu)
    if rule.kind == "prop1":
        report.bound = theorem1_bound(report.d0, lambda0, c_phi, g, rule.epsilon_hat, T)
    else:
        report.bound = theorem2_bound(lambda0, c_phi, g, rule.epsilon_hat, T)
    return pi, report
