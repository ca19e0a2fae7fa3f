"""Compiled versus pure-Python kernel timings.

    python benchmarks/bench_kernels.py [--repeat 5]

Prints one row per kernel: best wall time of each backend and the speed-up.
Outputs of the two backends are checked for agreement before timing.
"""

import argparse
import math
import time

import numpy as np

from fidsta.kernels import get_backend
from fidsta.orderstat import Dims, rank_pdf


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def _trusted(vals, bound):
    # points with a large cancellation bound are recomputed by the spline in production
    return np.where(bound <= 1e-11, vals, 0.0)


def cases():
    rng = np.random.default_rng(0)
    out = []
    for D, k in ((256, 3), (4096, 10)):
        p = rank_pdf(Dims.from_dim(D), k)
        x = np.linspace(1.0 / D, 8.0 / D + 0.02 / math.sqrt(k), 2000)
        out.append((f"series_pdf D={D} k={k} 2000 pts",
                    lambda m, x=x, p=p: _trusted(*m.series_pdf(x, p._logc, p.dims.dim, p.rank, p.log_norm))))
    for D, k in ((64, 2), (256, 3)):
        p = rank_pdf(Dims.from_dim(D), k)
        x = np.linspace(0.0, 4.0 / k, 500)
        out.append((f"spline_pdf D={D} k={k} 500 pts", lambda m, x=x, p=p: m.spline_pdf(x, p._knots, p.dims.dim - 1)))
    for K in (500, 5000):
        chunks = [rng.standard_exponential(1 << 16) for _ in range(32)]

        def run(m, K=K, chunks=chunks):
            heap, size = np.empty(K), 0
            for c in chunks:
                size = m.topk_update(heap, size, c)
            return np.sort(heap[:size])

        out.append((f"topk_update K={K} 32x65536", run))
    return out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    py = get_backend("python")
    try:
        cy = get_backend("compiled")
    except ImportError as exc:
        raise SystemExit(f"{exc}") from None
    print(f"{'kernel':40s} {'compiled':>12s} {'python':>12s} {'speed-up':>9s}")
    for name, fn in cases():
        a, b = np.asarray(fn(cy)), np.asarray(fn(py))
        if not np.allclose(a, b, rtol=1e-9, atol=0.0):
            raise SystemExit(f"{name}: backends disagree")
        tc, tp = best_of(lambda: fn(cy), args.repeat), best_of(lambda: fn(py), args.repeat)
        print(f"{name:40s} {tc * 1e3:10.2f}ms {tp * 1e3:10.2f}ms {tp / tc:8.1f}x")


if __name__ == "__main__":
    main()
