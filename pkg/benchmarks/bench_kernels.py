"""Compare the numba and numpy backends on the two hot kernels.

    python benchmarks/bench_kernels.py [--repeat 5]

simplex: DCOPF solves on the 39-bus case over a range of bids, plus the LP
relaxation of the 39-bus baseline MILP.
cart: tree training and traversal on a synthetic labelled table.
Each workload runs once per backend untimed first so numba compilation is
excluded.  Reported numbers are the best of ``--repeat`` runs.
"""
import argparse
import time

import numpy as np

from activebilevel._accel import HAVE_NUMBA, using_backend
from activebilevel.bilevel import BigM, build_baseline
from activebilevel.dcopf import solve_dcopf
from activebilevel.dtree import Hyperparams, train_cart
from activebilevel.lp_core import solve_lp
from activebilevel.network import load_case


def simplex_workload():
    case = load_case("case39")
    bids = np.linspace(case.strategic.cost, 10 * case.strategic.cost, 20)
    relax = build_baseline(case, BigM(1e4, 1e4)).base

    def run():
        for c in bids:
            solve_dcopf(case, float(c))
        solve_lp(relax)
    return run


def cart_workload(n=5000, d=40, k=12, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, d))
    w = rng.normal(size=(d, k))
    y = [str(v) for v in np.argmax(X @ w, axis=1)]
    hp = Hyperparams(max_depth=12, min_samples_leaf=2)

    def run():
        tree = train_cart(X, y, hp)
        for _ in range(20):
            tree.apply(X)
    return run


def best_time(fn, repeat):
    times = []
    for _ in range(repeat):
        start = time.perf_counter()
        fn()
        times.append(time.perf_counter() - start)
    return min(times)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    backends = ["numba", "numpy"] if HAVE_NUMBA else ["numpy"]
    print(f"{'kernel':<10}" + "".join(f"{b:>12}" for b in backends) + f"{'speedup':>10}")
    for name, make in (("simplex", simplex_workload), ("cart", cart_workload)):
        fn = make()
        row = {}
        for b in backends:
            with using_backend(b):
                fn()
                row[b] = best_time(fn, args.repeat)
        speed = row["numpy"] / row["numba"] if "numba" in row else float("nan")
        print(f"{name:<10}" + "".join(f"{row[b]:>11.3f}s" for b in backends) + f"{speed:>9.1f}x")


if __name__ == "__main__":
    main()
