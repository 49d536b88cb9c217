"""Time each hot kernel under the compiled and the numpy backend.

Usage: ``python3 benchmarks/bench_kernels.py [--repeat 5] [--scale 1.0]``.
Prints the best wall time per backend and the speed-up.
"""

import argparse
import time

import numpy as np

from codingmeasures import coding, kernels, shift
from codingmeasures.dynamics import RationalMap, preimages


def _cases(scale):
    rng = np.random.default_rng(0)
    f = RationalMap.polynomial([-1, 0, 1])
    z, paths = coding.choose_base_point(f, rng, 0.02)
    eta = paths[0].points
    starts = np.resize(preimages(f, eta[0]).points, max(2, int(512 * scale)))
    etas = np.tile(eta, (starts.size, 1))
    lift = (f.pa, f.qa, f.pb, f.qb, coding.CRIT_TOL, etas, starts, coding.STEP_MIN, coding.MAX_NEWTON)

    diam = (rng.normal(size=(int(4096 * scale), 64)) + 1j * rng.normal(size=(int(4096 * scale), 64)),)

    S = int(10_000 * scale)
    orbits = np.exp(2j * np.pi * rng.random((S, 8)))
    bowen = (orbits, np.linspace(0, S - 1, 200).astype(np.int64), 0.05)

    mu = shift.gibbs_measure(shift.FiniteRange(2, 2, np.log([2.0, 1.0, 1.0, 2.0])))
    stat_cdf, cond_cdf = np.cumsum(mu.stat), np.cumsum(mu.cond, axis=1)
    U = rng.random((int(2000 * scale), 500))
    chain = (stat_cdf, cond_cdf, 2, mu.order, U)
    birk = (stat_cdf, cond_cdf, 2, mu.order, np.array([1.0, 0.0, 0.0, 1.0]), 2, 499, U)
    return {"lift_batch": lift, "path_diameters": diam, "bowen_counts": bowen,
            "sample_chain": chain, "markov_birkhoff": birk}


def _best(fn, args, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--scale", type=float, default=1.0, help="multiply every problem size")
    args = ap.parse_args(argv)
    backends = kernels.available_backends()
    print(f"backends: {', '.join(backends)}")
    print(f"{'kernel':<16}" + "".join(f"{b:>12}" for b in backends) + ("   speed-up" if len(backends) > 1 else ""))
    for name, call_args in _cases(args.scale).items():
        times = [_best(getattr(kernels.get_backend(b), name), call_args, args.repeat) for b in backends]
        row = f"{name:<16}" + "".join(f"{t * 1e3:>10.2f}ms" for t in times)
        if len(times) > 1:
            row += f"   {times[1] / times[0]:>7.1f}x"
        print(row)


if __name__ == "__main__":
    main()
