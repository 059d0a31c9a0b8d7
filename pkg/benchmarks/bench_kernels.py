"""Benchmark the numba kernels against their pure-numpy fallbacks.

Runs each hot kernel on a representative workload under both backends and
prints a timing table. JIT compilation is excluded via a warm-up call.

    python benchmarks/bench_kernels.py [--quick]
"""

import argparse
import time

import numpy as np

from geoblend.accel import _numba, _numpy


def best_of(fn, repeats=3):
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def make_cases(quick: bool):
    rng = np.random.default_rng(0)
    n = 600 if quick else 2000
    lon = rng.uniform(-124.0, -114.0, n)
    lat = rng.uniform(32.5, 42.0, n)
    hour = rng.integers(0, 48, n).astype(np.float64)

    m = 12
    nbr = np.full((n, m), -1, dtype=np.int64)
    for i in range(1, n):
        take = min(m, i)
        nbr[i, :take] = np.arange(i - take, i)

    n_tree = 2000 if quick else 6000
    Xt = np.ascontiguousarray(rng.uniform(0, 1, (n_tree, 10)))
    yt = np.ascontiguousarray(np.sin(4 * Xt[:, 0]) + rng.normal(0, 0.3, n_tree))
    sample = np.ascontiguousarray(rng.integers(0, n_tree, n_tree).astype(np.int64))

    n_svr = 300 if quick else 900
    Xs = rng.uniform(-1, 1, (n_svr, 5))
    ys = np.sin(2 * Xs[:, 0]) + 0.5 * Xs[:, 1] + rng.normal(0, 0.1, n_svr)
    sq = ((Xs[:, None, :] - Xs[None, :, :]) ** 2).sum(-1)
    D = np.exp(-sq / 2.0)

    resid = rng.normal(0, 1, n)
    q = n // 2
    t_lon, t_lat = rng.uniform(-124, -114, q), rng.uniform(32.5, 42, q)
    t_hour = rng.integers(0, 48, q).astype(np.float64)
    t_nbr = rng.integers(0, n, size=(q, m)).astype(np.int64)

    cases = [
        ("pairwise_distance", f"n={n}",
         lambda b: b.pairwise_distance(lon, lat, 0)),
        ("cov_matrix", f"n={n}",
         lambda b: b.cov_matrix(lon, lat, hour, 1.0, 50.0, 4.0, 0.05, 0)),
        ("vecchia_factor", f"n={n}, m={m}",
         lambda b: b.vecchia_factor(lon, lat, hour, nbr, 1.0, 50.0, 4.0, 0.05, 0)),
        ("conditional_predict", f"q={q}, m={m}",
         lambda b: b.conditional_predict(lon, lat, hour, resid, t_lon, t_lat, t_hour, t_nbr, 1.0, 50.0, 4.0, 0.05, 0)),
        ("grow_tree", f"n={n_tree}, p=10",
         lambda b: b.grow_tree(Xt, yt, sample, 3, 5, -1, 42)),
        ("smo_solve", f"n={n_svr}",
         lambda b: b.smo_solve(D, ys, 0.05, 10.0, 1e-3, 2_000_000)),
    ]
    return cases


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--quick", action="store_true", help="smaller workloads")
    ap.add_argument("--repeats", type=int, default=3)
    args = ap.parse_args()

    cases = make_cases(args.quick)
    print(f"{'kernel':<22}{'workload':<18}{'numpy':>10}{'numba':>10}{'speedup':>9}")
    print("-" * 69)
    for name, workload, runner in cases:
        runner(_numba)  # warm up the JIT so compilation is not timed
        t_nb = best_of(lambda: runner(_numba), args.repeats)
        t_np = best_of(lambda: runner(_numpy), args.repeats)
        print(f"{name:<22}{workload:<18}{t_np:>9.3f}s{t_nb:>9.3f}s{t_np / t_nb:>8.1f}x")


if __name__ == "__main__":
    main()
