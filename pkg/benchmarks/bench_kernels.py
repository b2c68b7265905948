"""Time the compiled and pure-Python destination balancing kernels.

Usage::

    python3 benchmarks/bench_kernels.py [--stations 51 101 201] [--repeat 20]

Also times one full calibration per backend on a synthetic two-peak line.
"""

import argparse
import timeit

import numpy as np

from odentropy import CalibrationTarget, calibrate_ad, kernels, person_km
from odentropy.synth import generate, preset


def problem(N, seed=0):
    rng = np.random.default_rng(seed)
    d = rng.uniform(1.0, 30.0, (N, N))
    np.fill_diagonal(d, 0.0)
    W = np.exp(-0.1 * d)
    np.fill_diagonal(W, 0.0)
    daily = rng.uniform(100.0, 1000.0, N)
    return W, daily


def bench_kernel(N, backend, repeat):
    W, daily = problem(N)

    def run():
        b = np.ones(N)
        return kernels.balance_columns(W, daily, daily, b, 1e-10, 10_000, backend=backend)

    sweeps, _ = run()
    best = min(timeit.repeat(run, number=1, repeat=repeat))
    return best, sweeps


def bench_calibration(N, backend, repeat):
    sc, truth = generate(preset("two-peak-line", stations=N, intervals=96))
    target = CalibrationTarget(0.95 * person_km(truth, sc.distances))
    saved = kernels.BACKEND
    kernels.BACKEND = backend
    try:
        return min(timeit.repeat(lambda: calibrate_ad(sc, target), number=1, repeat=repeat))
    finally:
        kernels.BACKEND = saved


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--stations", type=int, nargs="+", default=[51, 101, 201])
    ap.add_argument("--repeat", type=int, default=20)
    args = ap.parse_args()

    backends = ["python"] + (["cython"] if kernels.compiled_available() else [])
    if len(backends) == 1:
        print("compiled extension not built; timing the fallback only")
    print(f"{'kernel':<12}{'N':>6}{'sweeps':>8}" + "".join(f"{b + ' ms':>14}" for b in backends) + f"{'speedup':>10}")
    for N in args.stations:
        times = {}
        for b in backends:
            times[b], sweeps = bench_kernel(N, b, args.repeat)
        speed = times["python"] / times["cython"] if "cython" in times else float("nan")
        print(f"{'balance':<12}{N:>6}{sweeps:>8}" + "".join(f"{times[b] * 1e3:>14.3f}" for b in backends)
              + f"{speed:>9.1f}x")
    for N in args.stations:
        times = {b: bench_calibration(N, b, max(3, args.repeat // 4)) for b in backends}
        speed = times["python"] / times["cython"] if "cython" in times else float("nan")
        print(f"{'calibrate':<12}{N:>6}{'':>8}" + "".join(f"{times[b] * 1e3:>14.3f}" for b in backends)
              + f"{speed:>9.1f}x")


if __name__ == "__main__":
    main()
