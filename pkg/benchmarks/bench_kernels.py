"""Throughput comparison of the numba kernels against the numpy fallback.

Run with the package installed:

    python3 benchmarks/bench_kernels.py

The numpy fallback is what you get with DTEBOUNDS_NO_NUMBA=1; here both
backends are imported explicitly so one process can time them side by side.
"""
import time

import numpy as np

from dtebounds import kernels


def timeit(fn, *args, repeat=5):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def bench_scan(n=200_000):
    rng = np.random.default_rng(0)
    a = rng.normal(size=n)
    b = rng.normal(size=n)
    if kernels.USE_NUMBA:
        kernels.scan_extrema(a[:100], b[:100])  # compile
        t_nb = timeit(lambda: kernels.scan_extrema(a, b))
    else:
        t_nb = float("nan")
    t_np = timeit(lambda: kernels._scan_extrema_exact_np(a, b))
    w1 = rng.random(n) + 0.1
    w0 = rng.random(n) + 0.1
    if kernels.USE_NUMBA:
        kernels.scan_extrema(a[:100], b[:100], w1[:100], w0[:100])
        t_nb_w = timeit(lambda: kernels.scan_extrema(a, b, w1, w0))
    else:
        t_nb_w = float("nan")
    vals = np.concatenate([a, b])
    signed = np.concatenate([w1, -w0])
    t_np_w = timeit(lambda: kernels._scan_extrema_np(vals, signed))
    return [("scan (exact counts)", t_nb, t_np),
            ("scan (weighted)", t_nb_w, t_np_w)]


def bench_interp(rows=500, grid=10_000):
    rng = np.random.default_rng(1)
    taus = np.linspace(0, 1, 101)
    q1 = np.sort(rng.normal(0.3, 1.0, size=(rows, 101)), axis=1)
    q0 = np.sort(rng.normal(size=(rows, 101)), axis=1)
    g = np.sort(rng.normal(0, 3, size=grid))
    if kernels.USE_NUMBA:
        kernels.interp_cdf_argopt(q1[:2], q0[:2], taus, g[:50])
        t_nb = timeit(lambda: kernels.interp_cdf_argopt(q1, q0, taus, g),
                      repeat=3)
    else:
        t_nb = float("nan")
    t_np = timeit(lambda: kernels._interp_cdf_argopt_np(q1, q0, taus, g),
                  repeat=3)
    return [("quantile-grid argopt", t_nb, t_np)]


def bench_shift(rows=2000, grid=10_000, m=1500):
    rng = np.random.default_rng(2)
    mu1 = rng.normal(size=rows)
    mu0 = rng.normal(size=rows)
    r1 = np.sort(rng.normal(size=m))
    r0 = np.sort(rng.normal(size=m))
    g = np.sort(rng.normal(0, 3, size=grid))
    if kernels.USE_NUMBA:
        kernels.shift_cdf_argopt(mu1[:2], mu0[:2], r1, r0, g[:50])
        t_nb = timeit(lambda: kernels.shift_cdf_argopt(mu1, mu0, r1, r0, g),
                      repeat=3)
    else:
        t_nb = float("nan")
    t_np = timeit(lambda: kernels._shift_cdf_argopt_np(mu1, mu0, r1, r0, g),
                  repeat=3)
    return [("location-shift argopt", t_nb, t_np)]


def main():
    print(f"numba backend active: {kernels.USE_NUMBA}")
    rows = bench_scan() + bench_interp() + bench_shift()
    print(f"{'kernel':<24s} {'numba':>10s} {'numpy':>10s} {'speedup':>8s}")
    for name, t_nb, t_np in rows:
        ratio = t_np / t_nb if t_nb == t_nb and t_nb > 0 else float("nan")
        nb = f"{t_nb*1e3:9.2f}ms" if t_nb == t_nb else "       n/a"
        print(f"{name:<24s} {nb} {t_np*1e3:9.2f}ms {ratio:7.1f}x")


if __name__ == "__main__":
    main()
