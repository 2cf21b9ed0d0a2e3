"""Benchmark the Bradley-Terry fit kernels: numba JIT vs pure numpy.

The bootstrap loop is the hot path of ranking, so this times a
bootstrap-shaped workload: R resampled (K, K) win matrices fitted per run.

    python benchmarks/bench_kernels.py [--systems 12] [--resamples 1000]

Set TAXOARENA_DISABLE_NUMBA=1 to confirm the fallback is what you measure in
production; here both paths are timed side by side regardless of the flag.
"""

import argparse
import time

import numpy as np

from taxoarena import kernels


def make_workload(rng, systems, resamples, battles=3600):
    strengths = np.exp(np.linspace(-1.0, 1.0, systems))
    wins = np.zeros((resamples, systems, systems))
    for r in range(resamples):
        a = rng.integers(0, systems, size=battles)
        b = rng.integers(0, systems, size=battles)
        mask = a != b
        a, b = a[mask], b[mask]
        p = strengths[a] / (strengths[a] + strengths[b])
        first_wins = rng.random(a.size) < p
        winners = np.where(first_wins, a, b)
        losers = np.where(first_wins, b, a)
        np.add.at(wins[r], (winners, losers), 1.0)
    return wins


def timeit(fn, *args, repeats=3):
    best = float("inf")
    result = None
    for _ in range(repeats):
        start = time.perf_counter()
        result = fn(*args)
        best = min(best, time.perf_counter() - start)
    return best, result


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--systems", type=int, default=12)
    parser.add_argument("--resamples", type=int, default=1000)
    parser.add_argument("--repeats", type=int, default=3)
    args = parser.parse_args()

    rng = np.random.default_rng(0)
    wins = make_workload(rng, args.systems, args.resamples)
    print(f"workload: {args.resamples} resamples x {args.systems} systems")

    if kernels.HAS_NUMBA:
        # warm the JIT outside the timed region
        kernels._bt_fit_batch_numba(wins[:2], 1e-8, 10_000, 20.0)
        t_numba, (lp_numba, _, conv_numba) = timeit(
            kernels._bt_fit_batch_numba, wins, 1e-8, 10_000, 20.0,
            repeats=args.repeats)
        print(f"numba batch fit : {t_numba * 1e3:9.1f} ms "
              f"({int(conv_numba.sum())}/{args.resamples} converged)")
    else:
        t_numba, lp_numba = None, None
        print("numba batch fit :   unavailable (disabled or not importable)")

    t_numpy, (lp_numpy, _, conv_numpy) = timeit(
        kernels._bt_fit_batch_numpy, wins, 1e-8, 10_000, 20.0,
        repeats=args.repeats)
    print(f"numpy batch fit : {t_numpy * 1e3:9.1f} ms "
          f"({int(conv_numpy.sum())}/{args.resamples} converged)")

    if t_numba is not None:
        print(f"speedup         : {t_numpy / t_numba:9.2f}x")
        drift = np.abs(lp_numba - lp_numpy).max()
        print(f"max |log-pi| gap: {drift:.2e}")


if __name__ == "__main__":
    main()
