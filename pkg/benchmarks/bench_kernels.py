"""Time the numba kernels against their numpy counterparts.

    python3 benchmarks/bench_kernels.py [--repeat 5] [--quick]

Each kernel is first checked for agreement between both paths, then timed
(best of ``--repeat``) after one warm-up call so JIT compilation is excluded.
"""

import argparse
import time

import numpy as np

from cbu import kernels


def best_of(fn, repeat):
    fn()  # warm-up / compile
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def cases(rng, quick):
    scale = 1 if quick else 4
    pos = rng.integers(0, 50, 500 * scale)
    neg = rng.integers(0, 50, 700 * scale)
    yield "pair_counts", (pos, neg), kernels.pair_counts_numpy, kernels.pair_counts_numba

    pool = rng.random(64)
    idx = rng.integers(0, 64, size=(2000 * scale, 64))
    args = (pool, idx, float(pool.mean()), 1.0)
    yield "resample_errors", args, kernels.resample_errors_numpy, kernels.resample_errors_numba

    x = rng.integers(0, 1000, 50_000 * scale).astype(np.float64)
    yield "average_ranks", (x,), kernels.average_ranks_numpy, kernels.average_ranks_numba


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--quick", action="store_true", help="smaller inputs")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)
    rng = np.random.default_rng(args.seed)

    print(f"{'kernel':<18}{'numpy ms':>12}{'numba ms':>12}{'speedup':>10}")
    rows = []
    for name, a, f_np, f_nb in cases(rng, args.quick):
        r_np, r_nb = f_np(*a), f_nb(*a)
        if not np.allclose(np.asarray(r_np, dtype=float), np.asarray(r_nb, dtype=float), rtol=0, atol=1e-12):
            raise SystemExit(f"{name}: numpy and numba results differ")
        t_np = best_of(lambda: f_np(*a), args.repeat)
        t_nb = best_of(lambda: f_nb(*a), args.repeat)
        rows.append((name, t_np, t_nb))
        print(f"{name:<18}{t_np * 1e3:>12.3f}{t_nb * 1e3:>12.3f}{t_np / t_nb:>9.1f}x")
    return rows


if __name__ == "__main__":
    main()
