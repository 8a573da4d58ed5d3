"""Compare the compiled and numpy rollout kernels on the same inputs.

    python benchmarks/bench_kernels.py [--n 20000] [--horizon 60] [--repeat 5]
"""

import argparse
import timeit

import numpy as np

from regmdp import _kernels_py
from regmdp.experiments import generate_random_mdp
from regmdp.sampling import _cdf_table

try:
    from regmdp import _kernels
except ImportError:
    _kernels = None


def inputs(n, horizon, states=20, actions=4, seed=0):
    rng = np.random.default_rng(seed)
    m = generate_random_mdp(states, actions, seed=seed)
    pi = rng.dirichlet(np.ones(actions), size=states)
    U = rng.random((n, 1 + 3 * horizon + 1 + 2 * horizon))
    return dict(nu_cdf=_cdf_table(m.mu)[0], pi_cdf=_cdf_table(pi),
                p_cdf=_cdf_table(m.transition.reshape(-1, states)), reward=np.ascontiguousarray(m.reward),
                A=actions, pen=rng.random(states), disc=m.discount ** np.arange(horizon), U=U,
                horizon=horizon, accept=1 - m.discount)


def run(mod, x):
    s = mod.sample_starts(x["nu_cdf"], x["pi_cdf"], x["p_cdf"], x["A"], x["accept"], x["horizon"], x["U"], 0)
    a = np.minimum((x["U"][:, 1 + 3 * x["horizon"]] * x["A"]).astype(np.int64), x["A"] - 1)
    q = mod.rollout(s, a, x["reward"], x["pi_cdf"], x["p_cdf"], x["A"], x["pen"], x["disc"], x["horizon"],
                    x["U"], 2 + 3 * x["horizon"], False)
    return s, q


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--n", type=int, default=20000)
    ap.add_argument("--horizon", type=int, default=60)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    x = inputs(args.n, args.horizon)
    backends = [("numpy", _kernels_py)] + ([("cython", _kernels)] if _kernels else [])
    outs = {}
    for name, mod in backends:
        outs[name] = run(mod, x)
        best = min(timeit.repeat(lambda: run(mod, x), number=1, repeat=args.repeat))
        steps = args.n * 2 * args.horizon
        print(f"{name:7s} {best * 1e3:9.2f} ms  {steps / best / 1e6:8.2f} M steps/s")
    if len(outs) == 2:
        same = all(np.array_equal(a, b) for a, b in zip(outs["numpy"], outs["cython"]))
        print(f"outputs bit-identical: {same}")
    else:
        print("compiled extension not available; numpy only")


if __name__ == "__main__":
    main()
