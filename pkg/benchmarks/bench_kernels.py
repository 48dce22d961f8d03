"""Wall-clock comparison of the compiled and pure-Python closed-loop kernels.

    python benchmarks/bench_kernels.py [--duration S] [--step S] [--repeat N]
"""

import argparse
import time

import numpy as np

from quadfl import kernels
from quadfl.simulator import simulate
from quadfl.verification import excited_circle


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--duration", type=float, default=10.0)
    ap.add_argument("--step", type=float, default=1e-3)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)

    sc = excited_circle(step=args.step, duration=args.duration)
    backends = sorted(kernels.available_backends())
    print(f"scenario: excited circle, {sc.nsteps} RK4 steps (dt={args.step:g} s)")
    results = {}
    for name in backends:
        secs, tel = best_of(lambda: simulate(sc, backend=name), args.repeat)
        results[name] = (secs, tel)
        print(f"{name:>8}: {secs:8.3f} s  ({sc.nsteps / secs:,.0f} steps/s)")
    if len(results) == 2:
        (tc, a), (tp, b) = results["cython"], results["python"]
        print(f" speedup: {tp / tc:.1f}x")
        print(f"max |x_cython - x_python|: {np.abs(a.x - b.x).max():.2e}")
    else:
        print("compiled kernel not built; only the fallback was timed")


if __name__ == "__main__":
    main()
