#!/usr/bin/env python3
"""Throughput and agreement of the two simulation kernel backends.

Runs the same reflected-band workload once per backend (compiled
extension and pure numpy), reports wall time, kernel step rate and the
estimates side by side.  The backends draw different random number
streams by design, so agreement is judged statistically: the gap
between the two means is compared against their combined standard
error.

Usage::

    python3 benchmarks/compare_backends.py [--n-paths N] [--dt DT]
"""

import argparse
import math
import os
import sys
import time

from reflband.boundary import build_value
from reflband.montecarlo import (
    SimConfig,
    backend_name,
    compiled_backend_available,
    estimate_payoff,
)
from reflband.ou import OUParams, ou_hat_basis
from reflband.reward import classify


def run_workload(backend, spec, reward, b, x, cfg, repeat):
    os.environ["REFLBAND_BACKEND"] = backend
    assert backend_name() == backend
    best = math.inf
    est = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        est = estimate_payoff(spec, reward, b, x, cfg)
        best = min(best, time.perf_counter() - t0)
    steps = est.details["n_samples"] * est.details["n_steps"]
    return est, best, steps / best


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--n-paths", type=int, default=20_000)
    parser.add_argument("--dt", type=float, default=1e-3)
    parser.add_argument("--horizon", type=float, default=50.0)
    parser.add_argument("--seed", type=int, default=7)
    parser.add_argument("--repeat", type=int, default=3)
    args = parser.parse_args(argv)

    p = OUParams()
    spec, reward, grid = p.diffusion(), p.reward(), p.default_grid()
    basis = ou_hat_basis(p, grid)
    solution = build_value(basis, spec, reward, classify(spec, reward, grid))
    b = solution.b_star
    cfg = SimConfig(dt=args.dt, n_paths=args.n_paths, rng_seed=args.seed,
                    horizon_T=args.horizon)
    print(f"workload: band policy b={b:.6f}, x=0, dt={args.dt:g}, "
          f"n_paths={args.n_paths}, T={args.horizon:g}")

    backends = ["numpy"]
    if compiled_backend_available():
        backends.insert(0, "cython")
    else:
        print("note: compiled backend not importable; timing numpy only")

    results = {}
    saved = os.environ.get("REFLBAND_BACKEND")
    try:
        for backend in backends:
            est, best, rate = run_workload(backend, spec, reward, b, 0.0,
                                           cfg, args.repeat)
            results[backend] = est
            print(f"{backend:>7}: {best:8.3f} s   {rate / 1e6:8.1f} M steps/s"
                  f"   estimate {est.mean:+.5f} +/- {est.std_error:.5f}")
    finally:
        if saved is None:
            os.environ.pop("REFLBAND_BACKEND", None)
        else:
            os.environ["REFLBAND_BACKEND"] = saved

    if len(results) == 2:
        a, b_ = results["cython"], results["numpy"]
        gap = abs(a.mean - b_.mean)
        scale = math.hypot(a.std_error, b_.std_error)
        print(f"agreement: |d mean| = {gap:.5f} = {gap / scale:.2f} combined SE")
        if gap > 4.0 * scale:
            print("FAIL: backends disagree beyond 4 combined SE")
            return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
