"""Pure-Python/numpy twin of ``fidsta._kernels``.

Selected automatically when the compiled extension is unavailable, or when
``FIDSTA_PURE_PYTHON=1`` is set. Results agree with the compiled kernels to
rounding; the series path here uses ``math.fsum`` instead of Neumaier
summation, which is at least as accurate.
"""

from __future__ import annotations

import heapq
import math

import numpy as np

BACKEND = "python"

_EPS = np.finfo(np.float64).eps


def _series_point(xi: float, logc: np.ndarray, D: int, k: int, log_norm: float):
    if not (0.0 <= xi <= 1.0):
        return 0.0, 0.0
    if xi * D < 1.0:
        jmax = D
    else:
        jmax = min(int(math.floor(1.0 / xi)), D)
        while jmax >= k and 1.0 - jmax * xi <= 0.0:
            jmax -= 1
        while jmax < D and 1.0 - (jmax + 1) * xi > 0.0:
            jmax += 1
    if jmax < k:
        # at x == 1/k the series is empty; the spline supplies the left limit
        return 0.0, (math.inf if xi * k <= 1.0 else 0.0)
    nterms = jmax - k + 1
    j = np.arange(k, jmax + 1, dtype=np.float64)
    jx = j * xi
    lc = logc[:nterms]
    if D == 2:
        lp = np.zeros(nterms)
        logs = lc.copy()
    else:
        lp = np.log1p(-jx)
        logs = lc + (D - 2) * lp
    lmax = logs.max()
    mag = np.exp(logs - lmax)
    signed = np.where(np.arange(nterms) % 2 == 1, -mag, mag)
    total = math.fsum(signed)
    abs_sum = float(mag.sum())
    if total <= 0.0:
        return 0.0, (math.inf if abs_sum > 0.0 else 0.0)
    err_sum = float(np.sum(mag * (np.abs(lc) + (D - 2) * (np.abs(lp) + jx / (1.0 - jx)) + 4.0)))
    val = total * math.exp(lmax + log_norm) if lmax + log_norm < 709.0 else math.inf
    if not math.isfinite(val):
        return 0.0, math.inf
    return val, _EPS * (err_sum + nterms * abs_sum) / total


def series_pdf(x, logc, D, k, log_norm):
    x = np.ascontiguousarray(x, dtype=np.float64)
    out = np.empty(x.shape[0])
    bound = np.empty(x.shape[0])
    for p, xi in enumerate(x):
        out[p], bound[p] = _series_point(float(xi), logc, int(D), int(k), float(log_norm))
    return out, bound


def spline_pdf(x, t, order):
    x = np.ascontiguousarray(x, dtype=np.float64)
    t = np.asarray(t, dtype=np.float64)
    order = int(order)
    out = np.zeros(x.shape[0])
    inside = (x >= t[0]) & (x <= t[order])
    if not inside.any():
        return out
    xs = x[inside]
    mu = np.searchsorted(t, xs, side="right") - 1
    mu = np.minimum(mu, order - 1)
    # step left off repeated knots (only the zero knot repeats)
    while True:
        rep = (mu > 0) & (t[mu] == t[np.minimum(mu + 1, order)])
        if not rep.any():
            break
        mu = np.where(rep, mu - 1, mu)
    n = xs.shape[0]
    v = np.zeros((n, order + 2))
    v[np.arange(n), mu] = 1.0
    mu_min, mu_max = int(mu.min()), int(mu.max())
    xcol = xs[:, None]
    for r in range(2, order + 1):
        lo = max(0, mu_min - r + 1)
        hi = min(mu_max, order - r)
        if hi < lo:
            continue
        i = np.arange(lo, hi + 1)
        d1 = t[i + r - 1] - t[i]
        d2 = t[i + r] - t[i + 1]
        with np.errstate(divide="ignore", invalid="ignore"):
            w1 = np.where(d1 > 0.0, (xcol - t[i]) / np.where(d1 > 0.0, d1, 1.0), 0.0)
            w2 = np.where(d2 > 0.0, (t[i + r] - xcol) / np.where(d2 > 0.0, d2, 1.0), 0.0)
        new = w1 * v[:, lo:hi + 1] + w2 * v[:, lo + 1:hi + 2]
        v[:, lo:hi + 1] = new
    out[inside] = v[:, 0] * order / (t[order] - t[0])
    return out


def topk_update(heap, size, chunk):
    cap = heap.shape[0]
    chunk = np.asarray(chunk, dtype=np.float64)
    current = heap[:size]
    if size == cap:
        chunk = chunk[chunk > current.min()]
        if chunk.size == 0:
            return size
    pool = np.concatenate([current, chunk])
    if pool.size > cap:
        pool = np.partition(pool, pool.size - cap)[pool.size - cap:]
    items = pool.tolist()
    heapq.heapify(items)
    heap[: len(items)] = items
    return len(items)
