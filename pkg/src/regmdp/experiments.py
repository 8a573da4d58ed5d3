"""Experiment runners: environments, comparisons, duality checks, schedule sweeps."""

from __future__ import annotations

import json
import math
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import bellman, reduction
from . import io as mdp_io
from . import mdp as core
from .regularizers import Regularizer, from_spec


class ConfigError(ValueError):
    """Invalid or inconsistent experiment configuration."""


class InvariantViolation(RuntimeError):
    """A checked invariant failed while a run was in progress."""


# environments

def generate_random_mdp(states: int, actions: int, sparsity: float = 1.0, seed: int = 0,
                        gamma: float = 0.9) -> core.TabularMdp:
    """Random MDP with Dirichlet rows on a random support of ``ceil(sparsity * states)`` states.

    Supports are chosen by integer draws; probabilities and rewards are
    floating-point draws from the same PCG64 stream, so a seed fixes the MDP.
    """
    if not (isinstance(states, (int, np.integer)) and isinstance(actions, (int, np.integer))):
        raise ValueError("states and actions must be integers")
    if states < 1 or actions < 1:
        raise ValueError("states and actions must be positive")
    if not 0.0 < sparsity <= 1.0:
        raise ValueError("sparsity must lie in (0, 1]")
    rng = np.random.default_rng(seed)
    k = int(math.ceil(sparsity * states))
    P = np.zeros((states, actions, states))
    for s in range(states):
        for a in range(actions):
            support = rng.choice(states, size=k, replace=False) if k < states else np.arange(states)
            w = rng.dirichlet(np.ones(k))
            P[s, a, support] = w / w.sum()
    reward = rng.uniform(0.0, 1.0, size=(states, actions))
    return core.TabularMdp(P, reward, gamma, np.full(states, 1.0 / states))


def chain_mdp(length: int, gamma: float = 0.9, slip: float = 0.0) -> core.TabularMdp:
    """Chain with actions ``0 = back to start`` and ``1 = forward``.

    Going back pays 0.1 and resets to state 0; moving forward pays nothing
    except at the last state, which pays 1 and stays put. ``slip`` sends a
    forward move back to state 0 with that probability.
    """
    if length < 1:
        raise ValueError("length must be positive")
    P = np.zeros((length, 2, length))
    r = np.zeros((length, 2))
    for s in range(length):
        P[s, 0, 0] = 1.0
        r[s, 0] = 0.1
        nxt = min(s + 1, length - 1)
        P[s, 1, nxt] += 1.0 - slip
        P[s, 1, 0] += slip
        if s == length - 1:
            r[s, 1] = 1.0
    mu = np.zeros(length)
    mu[0] = 1.0
    return core.TabularMdp(P, r, gamma, mu)


# configuration

SCHEDULES = ("fixed", "halving", "poly", "log")


def schedule_value(name: str, lambda0: float, t: int, alpha: float = 1.0) -> float:
    """Temperature at epoch ``t``; every schedule starts at ``lambda0``.

    * ``fixed``: ``lambda0``
    * ``halving``: ``lambda0 / 2^t``
    * ``poly``: ``lambda0 / (t+1)^alpha``
    * ``log``: ``lambda0 log 2 / log(t+2)``
    """
    if name == "fixed":
        return lambda0
    if name == "halving":
        return math.ldexp(lambda0, -t)
    if name == "poly":
        return lambda0 / (t + 1) ** alpha
    if name == "log":
        return lambda0 * math.log(2.0) / math.log(t + 2.0)
    raise ConfigError(f"unknown schedule {name!r}; expected one of {SCHEDULES}")


@dataclass
class ExperimentConfig:
    env: dict = field(default_factory=lambda: {"kind": "random", "states": 8, "actions": 3,
                                               "sparsity": 1.0, "seed": 7, "gamma": 0.9})
    regularizer: dict = field(default_factory=lambda: {"kind": "squared-l2"})
    solver: dict = field(default_factory=lambda: {"solver": "pga"})
    lambda0: float = 1.0
    epsilons: list = field(default_factory=lambda: [0.2, 0.1, 0.05, 0.025])
    max_iterations: int = 1_000_000
    epochs: int | None = None
    schedules: list = field(default_factory=lambda: ["halving", "poly", "log"])
    alpha: float = 1.0
    epoch_iterations: int = 200
    lambda_grid: list = field(default_factory=lambda: [0.01 * i for i in range(101)])
    baseline: bool = False
    mu: list | str = "env"  # "env" keeps the environment's own initial distribution
    nu: list | str = "uniform"
    seed: int = 0
    record_every: int = 100
    output: str = "results"

    def __post_init__(self):
        self.validate()

    def validate(self):
        if not self.epsilons or any(not (isinstance(e, (int, float)) and e > 0) for e in self.epsilons):
            raise ConfigError("epsilons must be a nonempty list of positive numbers")
        if not self.lambda0 > 0:
            raise ConfigError("lambda0 must be positive")
        if not isinstance(self.env, dict) or self.env.get("kind") not in ("random", "chain", "file"):
            raise ConfigError("env.kind must be one of random, chain, file")
        try:
            from_spec(self.regularizer)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad regularizer: {exc}") from exc
        try:
            self.binding()
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad solver binding: {exc}") from exc
        for name in self.schedules:
            schedule_value(name, 1.0, 0, self.alpha)
        if self.record_every < 1 or self.max_iterations < 1 or self.epoch_iterations < 1:
            raise ConfigError("iteration counts must be positive")

    def binding(self, **overrides) -> reduction.SubSolverBinding:
        spec = dict(self.solver)
        spec.setdefault("record_every", self.record_every)
        spec.update(overrides)
        known = {f.name for f in fields(reduction.SubSolverBinding)}
        unknown = set(spec) - known
        if unknown:
            raise ConfigError(f"unknown solver fields {sorted(unknown)}")
        return reduction.SubSolverBinding(**spec)

    def build_regularizer(self) -> Regularizer:
        return from_spec(self.regularizer)

    def build_mdp(self) -> core.TabularMdp:
        env = dict(self.env)
        kind = env.pop("kind")
        try:
            if kind == "random":
                mdp = generate_random_mdp(**env)
            elif kind == "chain":
                mdp = chain_mdp(**env)
            else:
                mdp = mdp_io.load_mdp(env["path"])
        except TypeError as exc:
            raise ConfigError(f"bad environment spec: {exc}") from exc
        if self.mu != "env":
            mdp = mdp.with_initial(self._dist(self.mu, mdp))
        return mdp

    def build_nu(self, mdp):
        return self._dist(self.nu, mdp)

    @staticmethod
    def _dist(spec, mdp):
        if spec == "env":
            return mdp.mu
        if spec == "uniform":
            return np.full(mdp.num_states, 1.0 / mdp.num_states)
        try:
            return core.check_distribution(mdp, np.asarray(spec, dtype=float))
        except ValueError as exc:
            raise ConfigError(f"bad distribution: {exc}") from exc

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"unknown config fields {sorted(unknown)}")
        return cls(**doc)

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True)

    @classmethod
    def loads(cls, text: str) -> "ExperimentConfig":
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
        if not isinstance(doc, dict):
            raise ConfigError("config must be a JSON object")
        return cls.from_dict(doc)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.loads(text)


@dataclass
class RunRecord:
    name: str
    epsilon: float | None
    rows: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)
    policy: list | None = None  # final policy, so gaps can be recomputed offline


# comparison

class _Monitor:
    """Adds the unregularized true gap under mu to every logged row."""

    def __init__(self, mdp, v_opt):
        self.mdp = mdp
        self.j_opt = float(mdp.mu @ v_opt)

    def __call__(self, pi):
        j = float(self.mdp.mu @ core.evaluate_policy(self.mdp, pi))
        if not math.isfinite(j):
            raise InvariantViolation("non-finite policy value")
        return {"value": j, "true_gap": max(self.j_opt - j, 0.0)}


def _rows_from_trace(trace, epoch, offset):
    rows = []
    for r in trace.rows:
        rows.append({"epoch": epoch, "iteration": offset + r["iteration"], "inner": r["iteration"],
                     "lam": r.get("lam"), "objective_nu": r.get("objective"),
                     "objective_mu": r.get("objective_mu", r.get("objective")),
                     "gap_reg": r.get("gap"), "true_gap": r.get("true_gap"),
                     "grad_norm": r.get("grad_norm"), "samples": 0})
    return rows


def fixed_lambda_run(mdp, reg, binding, eps, nu, max_iterations, monitor=None):
    """Single temperature ``eps (1-g) / (2 C)``, run until the regularized gap is at most ``eps/2``."""
    c_phi = reg.constants(mdp.num_actions).c_phi
    lam = eps * (1.0 - mdp.discount) / (2.0 * c_phi)
    _, v_star = bellman.soft_optimal_oracle(mdp, reg, lam)
    target = eps / 2.0

    def stop(pi, values):
        return reduction.measured_gap(v_star, values, mdp.mu) <= target

    init = core.uniform_policy(mdp)
    if reduction.measured_gap(v_star, core.regularized_value(mdp, init, reg, lam), mdp.mu) <= target:
        return init, 0, None, lam, True
    pi, used, tr = reduction.run_subsolver(binding, mdp, reg, lam, init, max_iterations, nu, v_star, stop, monitor)
    certified = reduction.measured_gap(v_star, core.regularized_value(mdp, pi, reg, lam), mdp.mu) <= target
    return pi, used, tr, lam, certified


def reduction_epochs(rule, eps, lambda0, c_phi, gamma, d0) -> int:
    """Fewest epochs whose bound (with zero slack) is at most ``eps``."""
    if rule.kind == "prop2":
        return reduction.epochs_for_accuracy(eps, lambda0, c_phi, gamma)
    T = 0
    while reduction.theorem1_bound(d0, lambda0, c_phi, gamma, 0.0, T) > eps:
        T += 1
    return T


def run_comparison(cfg: ExperimentConfig):
    """Fixed small temperature vs halving reduction, for every target accuracy.

    Both arms use the same sub-solver and stop when their own certificate
    proves ``eps``-optimality: the fixed arm at regularized gap ``eps/2``, the
    reduction arm after enough certified epochs for its bound to reach ``eps``.
    Returns ``(records, summary_rows)``.
    """
    mdp = cfg.build_mdp()
    reg = cfg.build_regularizer()
    nu = cfg.build_nu(mdp)
    base = cfg.binding(nu=tuple(nu.tolist()) if cfg.nu != "uniform" else None)
    base.check_regularizer(reg)
    rule_kind = "prop1" if base.solver in ("rmpi", "mdpo") else "prop2"
    rule = reduction.StoppingRule(rule_kind)
    c_phi = reg.constants(mdp.num_actions).c_phi
    _, v_opt = bellman.soft_optimal_oracle(mdp, reg, 0.0)
    monitor = _Monitor(mdp, v_opt)
    records, summary = [], []
    init = core.uniform_policy(mdp)
    for eps in cfg.epsilons:
        t0 = time.perf_counter()
        binding = cfg.binding(budget="certified", iterations=cfg.max_iterations, nu=base.nu)
        pi, used, tr, lam, ok = fixed_lambda_run(mdp, reg, binding, eps, nu, cfg.max_iterations, monitor)
        rec = RunRecord("fixed", eps, _rows_from_trace(tr, 0, 0) if tr else [], policy=pi.tolist())
        gap = monitor(pi)["true_gap"]
        rec.summary = {"method": "fixed", "epsilon": eps, "lambda": lam, "epochs": 1, "iterations": used,
                       "samples": 0, "final_gap": gap, "certified": ok, "reached": gap <= eps,
                       "wall_clock": time.perf_counter() - t0}
        records.append(rec)

        t0 = time.perf_counter()
        _, v0 = bellman.soft_optimal_oracle(mdp, reg, cfg.lambda0)
        d0 = reduction.measured_gap(v0, core.regularized_value(mdp, init, reg, cfg.lambda0), mdp.mu)
        T = cfg.epochs if cfg.epochs is not None else reduction_epochs(rule, eps, cfg.lambda0, c_phi,
                                                                        mdp.discount, d0)
        pi, rep = reduction.adapt_reduce(mdp, reg, cfg.lambda0, init, binding, rule, T, keep_traces=True,
                                         monitor=monitor)
        rec = RunRecord("adapt", eps, policy=pi.tolist())
        rec.rows.append({"epoch": 0, "iteration": 0, "inner": 0, "lam": cfg.lambda0, "gap_reg": rep.d0,
                         "true_gap": monitor(init)["true_gap"], "samples": 0})
        offset = 0
        traces = iter(rep.traces)
        for e in rep.epochs:
            if e.iterations or e.status != "already-certified":
                rec.rows.extend(r for r in _rows_from_trace(next(traces), e.t, offset) if r["inner"] > 0)
            offset += e.iterations
        gap = rep.final_gap
        rec.summary = {"method": "adapt", "epsilon": eps, "lambda": math.ldexp(cfg.lambda0, -T), "epochs": T,
                       "iterations": rep.total_iterations, "samples": 0, "final_gap": gap,
                       "certified": rep.all_certified, "reached": gap <= eps, "bound": rep.bound,
                       "wall_clock": time.perf_counter() - t0}
        records.append(rec)

        if cfg.baseline:
            t0 = time.perf_counter()
            j_opt = monitor.j_opt
            stop = lambda p, v: j_opt - float(mdp.mu @ v) <= eps  # noqa: E731
            pi, used, tr = reduction.run_subsolver(binding, mdp, reg, 0.0, init, cfg.max_iterations, nu,
                                                   v_opt, stop, monitor)
            gap = monitor(pi)["true_gap"]
            rec = RunRecord("unregularized", eps, _rows_from_trace(tr, 0, 0), policy=pi.tolist())
            rec.summary = {"method": "unregularized", "epsilon": eps, "lambda": 0.0, "epochs": 1,
                           "iterations": used, "samples": 0, "final_gap": gap, "certified": gap <= eps,
                           "reached": gap <= eps, "wall_clock": time.perf_counter() - t0}
            records.append(rec)
    summary = [r.summary for r in records]
    return records, summary


def fit_slope(epsilons, iterations) -> float:
    """Least-squares slope of ``log iterations`` against ``log eps``."""
    x = np.log(np.asarray(epsilons, dtype=float))
    y = np.log(np.maximum(np.asarray(iterations, dtype=float), 1.0))
    return float(np.polyfit(x, y, 1)[0])


# strong duality

@dataclass
class DualityReport:
    lambdas: list
    values: list
    argmin: float
    minimum: float
    unregularized: float
    gap: float
    monotone: bool
    min_increment: float
    passed: bool


def verify_strong_duality(mdp, reg: Regularizer, lambda_grid, tolerance: float = 1e-6) -> DualityReport:
    """Check that ``min_lam max_pi J(pi, lam)`` is attained at ``lam = 0``.

    Needs a nonpositive regularizer, for which ``max_pi J(pi, lam)`` is
    nondecreasing in ``lam``.
    """
    if reg.sign_convention != "nonpositive":
        raise ConfigError("strong-duality check needs a nonpositive regularizer (raw-entropy)")
    grid = sorted(float(x) for x in lambda_grid)
    if not grid or grid[0] != 0.0:
        raise ConfigError("lambda grid must include 0")
    if grid[0] < 0:
        raise ConfigError("lambda grid must be nonnegative")
    values = []
    for lam in grid:
        _, v = bellman.soft_optimal_oracle(mdp, reg, lam)
        values.append(float(mdp.mu @ v))
    i = int(np.argmin(values))
    incr = float(np.min(np.diff(values))) if len(values) > 1 else 0.0
    monotone = incr >= -1e-8
    gap = abs(values[i] - values[0])
    return DualityReport(grid, values, grid[i], values[i], values[0], gap, monotone, incr,
                         gap <= tolerance and monotone)


# schedule sweeps

def schedule_run(mdp, reg, binding, schedule, lambda0, T, alpha, monitor, init=None):
    """Warm-started epochs with a fixed per-epoch budget under one schedule."""
    pi = core.uniform_policy(mdp) if init is None else init
    nu = mdp.mu if binding.nu is None else np.asarray(binding.nu, dtype=float)
    rows = [{"schedule": schedule, "epoch": 0, "iteration": 0, "lam": lambda0,
             "true_gap": monitor(pi)["true_gap"]}]
    total = 0
    for t in range(T):
        lam = schedule_value(schedule, lambda0, t, alpha)
        pi, used, tr = reduction.run_subsolver(binding, mdp, reg, lam, pi, binding.iterations, nu, None, None,
                                               monitor)
        for r in tr.rows:
            if r["iteration"] > 0:
                rows.append({"schedule": schedule, "epoch": t, "iteration": total + r["iteration"], "lam": lam,
                             "true_gap": r["true_gap"]})
        total += used
    return pi, rows


def iterations_to(rows, eps):
    """First cumulative iteration at which the logged true gap is at most ``eps``."""
    for r in rows:
        if r["true_gap"] is not None and r["true_gap"] <= eps:
            return r["iteration"]
    return None


def schedule_sweep(cfg: ExperimentConfig):
    """Identical budgets under every configured schedule; no certification is claimed."""
    mdp = cfg.build_mdp()
    reg = cfg.build_regularizer()
    binding = cfg.binding(budget="fixed", iterations=cfg.epoch_iterations, certification="theoretical-budget")
    binding.check_regularizer(reg)
    _, v_opt = bellman.soft_optimal_oracle(mdp, reg, 0.0)
    monitor = _Monitor(mdp, v_opt)
    T = cfg.epochs if cfg.epochs is not None else 10
    records, summary = [], []
    for name in cfg.schedules:
        pi, rows = schedule_run(mdp, reg, binding, name, cfg.lambda0, T, cfg.alpha, monitor)
        rec = RunRecord(name, None, rows, policy=pi.tolist())
        rec.summary = {"schedule": name, "epochs": T, "iterations": rows[-1]["iteration"],
                       "final_gap": rows[-1]["true_gap"]}
        for eps in cfg.epsilons:
            rec.summary[f"iterations_to_{eps}"] = iterations_to(rows, eps)
        records.append(rec)
        summary.append(rec.summary)
    return records, summary


def write_records(records, summary, out_dir, fmt="csv", include_timing=False):
    """One file per run, its final policy when known, and a summary file.

    Wall-clock is left out unless asked for.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    summ = [dict(s) for s in summary]
    if not include_timing:
        for s in summ:
            s.pop("wall_clock", None)
    paths = []
    for rec in records:
        stem = rec.name if rec.epsilon is None else f"{rec.name}_eps{rec.epsilon:g}"
        if fmt == "json":
            p = out / f"run_{stem}.json"
            mdp_io.write_json(p, {"name": rec.name, "epsilon": rec.epsilon, "rows": rec.rows})
        else:
            p = out / f"run_{stem}.csv"
            mdp_io.write_csv(p, rec.rows)
        paths.append(p)
        if rec.policy is not None:
            p = out / f"policy_{stem}.json"
            mdp_io.write_json(p, rec.policy)
            paths.append(p)
    if fmt == "json":
        p = out / "summary.json"
        mdp_io.write_json(p, summ)
    else:
        p = out / "summary.csv"
        mdp_io.write_csv(p, summ)
    paths.append(p)
    return paths
