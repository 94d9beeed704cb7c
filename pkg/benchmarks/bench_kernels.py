#!/usr/bin/env python3
"""Benchmark the jitted kernels against the pure-numpy fallback.

Usage: python benchmarks/bench_kernels.py [--repeat N]

Times the three hot paths (level-2 value+gradient, level-3 value,
level-3 value+gradient) on the default 60/60 grids at a reference
parameter point, plus one full level-3 capacity solve per backend.
"""

import argparse
import statistics
import subprocess
import sys
import time


def bench_kernels(repeat):
    from nsperc import backend
    from nsperc.specfun import gauss_hermite

    g = gauss_hermite(60)
    l2_args = (-1.5, 0.4747, 3.6835, 0.1324, g.nodes, g.weights)
    l3_args = (-1.5, 0.9693, 0.4075, 12.6, 3.25, 0.0647,
               g.nodes, g.weights, g.nodes, g.weights)
    cases = [
        ("l2_terms (value+grad, 60 nodes)", lambda: backend.l2_terms(*l2_args)),
        ("l3_value (60x60 nodes)", lambda: backend.l3_value(*l3_args)),
        ("l3_terms (value+grad, 60x60)", lambda: backend.l3_terms(*l3_args)),
    ]
    print(f"backend: {backend.backend_name()}")
    for name, fn in cases:
        fn()  # warm-up / jit
        times = []
        for _ in range(repeat):
            t0 = time.perf_counter()
            fn()
            times.append(time.perf_counter() - t0)
        print(f"  {name:36s} median {1e3 * statistics.median(times):8.3f} ms")

    from nsperc import ModelPoint, solve_stationary_full
    solve_stationary_full(ModelPoint(-1.5, 36.40), "3f")  # warm
    t0 = time.perf_counter()
    solve_stationary_full(ModelPoint(-1.5, 36.40), "3f")
    print(f"  {'3f stationary solve (warm)':36s} once   {1e3 * (time.perf_counter() - t0):8.3f} ms")


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=50)
    ap.add_argument("--backend", choices=("numba", "numpy"), default=None,
                    help="run a single backend in-process (default: both via subprocesses)")
    args = ap.parse_args()
    if args.backend is not None:
        bench_kernels(args.repeat)
        return
    import os
    for name in ("numba", "numpy"):
        env = dict(os.environ, NSP_BACKEND=name)
        subprocess.run([sys.executable, __file__, "--backend", name,
                        "--repeat", str(args.repeat)], env=env, check=True)


if __name__ == "__main__":
    main()
