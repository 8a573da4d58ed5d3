"""Command-line entry point: ``python -m regmdp <verb> [options]``.

Exit codes: 0 success, 2 configuration error, 3 invariant violation mid-run.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import bellman, reduction
from . import io as mdp_io
from . import mdp as core
from .experiments import (ConfigError, ExperimentConfig, InvariantViolation, RunRecord, generate_random_mdp,
                          run_comparison, schedule_sweep, verify_strong_duality, write_records)
from .regularizers import from_spec

log = logging.getLogger("regmdp")

EXIT_OK, EXIT_CONFIG, EXIT_INVARIANT = 0, 2, 3


def _load_config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
    doc = cfg.to_dict()
    if args.seed is not None:
        doc["seed"] = args.seed
        if doc["env"].get("kind") == "random":
            doc["env"] = dict(doc["env"], seed=args.seed)
    if args.out is not None:
        doc["output"] = args.out
    return ExperimentConfig.from_dict(doc)


def cmd_solve(args, cfg):
    mdp = cfg.build_mdp()
    reg = cfg.build_regularizer()
    binding = cfg.binding(budget="fixed" if cfg.solver.get("budget") == "fixed" else "certified",
                          iterations=min(cfg.max_iterations, cfg.solver.get("iterations", cfg.max_iterations)))
    binding.check_regularizer(reg)
    lam = args.lam if args.lam is not None else cfg.lambda0
    nu = cfg.build_nu(mdp)
    _, v_star = bellman.soft_optimal_oracle(mdp, reg, lam)
    _, v_opt = bellman.soft_optimal_oracle(mdp, reg, 0.0)
    stop = None
    if binding.budget == "certified":
        tol = cfg.epsilons[-1]
        stop = lambda p, v: reduction.measured_gap(v_star, v, mdp.mu) <= tol  # noqa: E731
    pi, used, tr = reduction.run_subsolver(binding, mdp, reg, lam, core.uniform_policy(mdp), binding.iterations,
                                           nu, v_star, stop)
    gap_reg = reduction.measured_gap(v_star, core.regularized_value(mdp, pi, reg, lam), mdp.mu)
    gap = reduction.measured_gap(v_opt, core.evaluate_policy(mdp, pi), mdp.mu)
    rec = RunRecord(f"solve_{binding.solver}", None, [dict(r) for r in tr.rows])
    summary = [{"solver": binding.solver, "lambda": lam, "iterations": used, "gap_reg": gap_reg,
                "true_gap": gap, "status": tr.status}]
    return [rec], summary


def cmd_duality(args, cfg):
    mdp = cfg.build_mdp()
    reg = from_spec({"kind": "raw-entropy"}) if cfg.build_regularizer().kind != "raw-entropy" else cfg.build_regularizer()
    rep = verify_strong_duality(mdp, reg, cfg.lambda_grid, args.tolerance)
    rows = [{"lambda": lam, "max_objective": v} for lam, v in zip(rep.lambdas, rep.values)]
    summ = asdict(rep)
    summ.pop("lambdas")
    summ.pop("values")
    return [RunRecord("duality", None, rows)], [summ]


def cmd_gen(args, cfg):
    env = dict(cfg.env)
    if env.get("kind") != "random":
        raise ConfigError("gen needs a random environment spec")
    env.pop("kind")
    for key in ("states", "actions", "sparsity", "gamma"):
        val = getattr(args, key)
        if val is not None:
            env[key] = val
    mdp = generate_random_mdp(**env)
    out = Path(cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"mdp_seed{env.get('seed', 0)}.json"
    mdp_io.save_mdp(mdp, path)
    return path


def build_parser():
    parser = argparse.ArgumentParser(prog="regmdp", description="Regularized tabular MDP experiments")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="experiment config (JSON)")
    common.add_argument("--seed", type=int, help="master seed; also seeds a random environment")
    common.add_argument("--out", help="output directory")
    common.add_argument("--format", choices=("csv", "json"), default="csv")
    common.add_argument("--quiet", action="store_true")
    common.add_argument("--timing", action="store_true", help="include wall-clock in the summary")
    sub = parser.add_subparsers(dest="verb", required=True)
    p = sub.add_parser("solve", parents=[common], help="run one solver on one MDP")
    p.add_argument("--lam", type=float, help="temperature (defaults to lambda0)")
    sub.add_parser("compare", parents=[common], help="fixed temperature vs halving reduction")
    p = sub.add_parser("duality", parents=[common], help="strong-duality check with raw entropy")
    p.add_argument("--tolerance", type=float, default=1e-6)
    sub.add_parser("sweep", parents=[common], help="compare temperature schedules")
    p = sub.add_parser("gen", parents=[common], help="write a random MDP file")
    p.add_argument("--states", type=int)
    p.add_argument("--actions", type=int)
    p.add_argument("--sparsity", type=float)
    p.add_argument("--gamma", type=float)
    return parser


def _print_summary(summary):
    for row in summary:
        print("  ".join(f"{k}={v:.6g}" if isinstance(v, float) else f"{k}={v}" for k, v in row.items()))


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO, format="%(message)s")
    try:
        cfg = _load_config(args)
        if args.verb == "gen":
            path = cmd_gen(args, cfg)
            if not args.quiet:
                print(path)
            return EXIT_OK
        handler = {"solve": cmd_solve, "compare": lambda a, c: run_comparison(c),
                   "duality": cmd_duality, "sweep": lambda a, c: schedule_sweep(c)}[args.verb]
        records, summary = handler(args, cfg)
        paths = write_records(records, summary, cfg.output, args.format, args.timing)
        if not args.quiet:
            _print_summary(summary)
            log.info("wrote %d files to %s", len(paths), cfg.output)
        return EXIT_OK
    except (ConfigError, reduction.ReductionConfigError, core.MdpValidationError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (InvariantViolation, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"invariant violation: {exc}", file=sys.stderr)
        return EXIT_INVARIANT


if __name__ == "__main__":
    sys.exit(main())
