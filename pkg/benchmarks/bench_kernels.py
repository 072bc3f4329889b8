#!/usr/bin/env python3
"""Numba kernels vs their numpy twins on the particle integrator and current sampler.

    python benchmarks/bench_kernels.py [--repeat 3]

Both backends are called directly (the SUBSEARCH_DISABLE_NUMBA switch only
picks the default), and every timing is checked for bitwise-equal output.
"""
import argparse
import time

import numpy as np

from subsearch import _accel, kernels
from subsearch.environment import CurrentField, PerturbationSpec, perturbation_table
from subsearch.kinematics import REGIMES


def make_case(n, steps, seed=0):
    rng = np.random.default_rng(seed)
    cf = CurrentField([-2000, -2000, -4000], [500, 500, 500], rng.normal(0, 0.05, (3, 9, 9, 9)))
    n_win = steps // 600 + 1
    spec = PerturbationSpec()
    pert = np.stack([perturbation_table(spec, rng, n_win) for _ in range(n)])
    start = np.tile([0.0, 0.0, -1000.0], (n, 1))
    return cf, pert, start


def run(fn, cf, pert, start, steps, regime):
    n = start.shape[0]
    pos = start.copy()
    vel = np.zeros((n, 3))
    vel[:, 2] = -0.5
    v0h = np.zeros((n, 2))
    gnd = np.zeros(n, bool)
    t_end = np.zeros(n)
    every = 60
    rec = (np.empty((n, steps // every + 1, 3)), np.empty((n, steps // every + 1, 3)),
           np.empty((n, steps // every + 1), bool))
    t = time.perf_counter()
    fn(pos, vel, v0h, gnd, t_end, 0.0, steps, 1.0, REGIMES[regime], 0.001, 0.0, 4000.0,
       cf.uvw, cf.origin, cf.spacing, pert, 0, 600.0, every, *rec)
    return time.perf_counter() - t, (pos, t_end, rec[0])


def best_of(k, *args):
    times, out = [], None
    for _ in range(k):
        dt, out = run(*args)
        times.append(dt)
    return min(times), out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    if not _accel.HAVE_NUMBA:
        raise SystemExit("numba is not available; nothing to compare")

    cf, pert, start = make_case(8, 600)
    t0 = time.perf_counter()
    run(kernels._integrate_nb, cf, pert, start, 600, "sink")
    kernels._sample_points_nb(cf.uvw, cf.origin, cf.spacing, start)
    print(f"JIT warm-up (or cache load): {time.perf_counter() - t0:.2f} s\n")

    print(f"{'regime':>6} {'particles':>9} {'steps':>6} {'numpy (s)':>10} {'numba (s)':>10} "
          f"{'speedup':>8} {'equal':>6}")
    for regime in ("drift", "sink"):
        for n, steps in ((100, 1800), (1000, 1800), (1000, 7200)):
            cf, pert, start = make_case(n, steps)
            t_np, a = best_of(args.repeat, kernels._integrate_np, cf, pert, start, steps, regime)
            t_nb, b = best_of(args.repeat, kernels._integrate_nb, cf, pert, start, steps, regime)
            same = all(np.array_equal(x, y) for x, y in zip(a, b))
            print(f"{regime:>6} {n:>9} {steps:>6} {t_np:>10.3f} {t_nb:>10.3f} "
                  f"{t_np / t_nb:>7.1f}x {'yes' if same else 'NO':>6}")

    pts = np.random.default_rng(1).uniform([-2500, -2500, -4200], [2500, 2500, 0], (200_000, 3))
    for name, fn in (("numpy", kernels._sample_points_np), ("numba", kernels._sample_points_nb)):
        t = time.perf_counter()
        fn(cf.uvw, cf.origin, cf.spacing, pts)
        print(f"\ntrilinear sampling of {len(pts)} points, {name}: "
              f"{time.perf_counter() - t:.3f} s", end="")
    print()


if __name__ == "__main__":
    main()
