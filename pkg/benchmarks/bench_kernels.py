"""Time the compiled and numpy kernel backends on the same inputs.

Run with ``python3 benchmarks/bench_kernels.py [--paths N] [--repeat R]``.
"""
import argparse
import timeit

import numpy as np

from longrisk import _kernels, random_model
from longrisk._kernels import cumulative_rows, sample_paths, strategy_gains


def inputs(n_paths, horizon, n_states, n_strategies, seed=0):
    rng = np.random.default_rng(seed)
    m = random_model(n_states, seed=seed)
    cum = cumulative_rows(m.transition)
    u = rng.random((n_paths, horizon))
    states = sample_paths(cum, 0, u, backend="python")
    incr = 0.1 * rng.normal(size=(n_paths, horizon))
    w = np.full(n_paths, 1.0 / n_paths)
    strategies = rng.choice(np.array([-1, 1], dtype=np.int8), size=(n_strategies, horizon, n_states))
    return cum, u, states, incr, w, strategies, np.array([0.01, 0.1, 1.0])


def best_of(fn, repeat):
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--paths", type=int, default=100_000)
    ap.add_argument("--horizon", type=int, default=20)
    ap.add_argument("--states", type=int, default=8)
    ap.add_argument("--strategies", type=int, default=100)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()

    cum, u, states, incr, w, strat, a = inputs(args.paths, args.horizon, args.states, args.strategies)
    backends = ["python"] + (["cython"] if _kernels.BACKEND == "cython" else [])
    print(f"paths={args.paths} horizon={args.horizon} states={args.states} "
          f"strategies={args.strategies} threads={_kernels.threads()}")
    print(f"{'kernel':<16}{'backend':<10}{'seconds':>10}{'speedup':>10}")
    for name, call in (
        ("sample_paths", lambda b: sample_paths(cum, 0, u, backend=b)),
        ("strategy_gains", lambda b: strategy_gains(states, incr, w, strat, a, backend=b)),
    ):
        base = None
        outs = {}
        for b in backends:
            secs = best_of(lambda: call(b), args.repeat)
            outs[b] = call(b)
            base = base or secs
            print(f"{name:<16}{b:<10}{secs:>10.4f}{base / secs:>9.1f}x")
        if len(outs) == 2:
            p, c = outs["python"], outs["cython"]
            if name == "sample_paths":
                same = np.array_equal(p, c)
            else:
                same = all(np.allclose(x, y, rtol=1e-12) for x, y in zip(p, c))
            print(f"{'':<16}backends agree: {same}")


if __name__ == "__main__":
    main()
