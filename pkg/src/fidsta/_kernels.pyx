# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot loops. Signatures mirror ``fidsta._pykernels`` exactly."""

import numpy as np

from libc.math cimport exp, fabs, log1p, floor, isfinite, INFINITY
from libc.stdlib cimport calloc, free

cdef double EPS = 2.220446049250313e-16

BACKEND = "compiled"


def series_pdf(const double[::1] x, const double[::1] logc, long D, long k, double log_norm):
    """Alternating order-statistics series with compensated summation.

    Returns ``(values, rel_bound)`` where ``rel_bound`` is an a-posteriori
    bound on the relative error of each value (``inf`` when the sum lost all
    significant digits).
    """
    cdef Py_ssize_t n = x.shape[0]
    out_arr = np.empty(n, dtype=np.float64)
    bound_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef double[::1] bound = bound_arr
    cdef Py_ssize_t p
    cdef long j, jmax, i, nterms
    cdef double xi, lmax, l, mag, s, c, t, abs_sum, err_sum, total, jx, lp, expo, val
    expo = <double>(D - 2)
    with nogil:
        for p in range(n):
            xi = x[p]
            if not (xi >= 0.0 and xi <= 1.0):
                out[p] = 0.0
                bound[p] = 0.0
                continue
            if xi * D < 1.0:
                jmax = D
            else:
                jmax = <long>floor(1.0 / xi)
                if jmax > D:
                    jmax = D
                while jmax >= k and 1.0 - jmax * xi <= 0.0:
                    jmax -= 1
                while jmax < D and 1.0 - (jmax + 1) * xi > 0.0:
                    jmax += 1
            if jmax < k:
                # at x == 1/k the series is empty; the spline supplies the left limit
                out[p] = 0.0
                bound[p] = INFINITY if xi * k <= 1.0 else 0.0
                continue
            nterms = jmax - k + 1
            lmax = -INFINITY
            for i in range(nterms):
                j = k + i
                if D == 2:
                    l = logc[i]
                else:
                    l = logc[i] + expo * log1p(-(j * xi))
                if l > lmax:
                    lmax = l
            s = 0.0
            c = 0.0
            abs_sum = 0.0
            err_sum = 0.0
            for i in range(nterms):
                j = k + i
                jx = j * xi
                if D == 2:
                    lp = 0.0
                    l = logc[i]
                else:
                    lp = log1p(-jx)
                    l = logc[i] + expo * lp
                mag = exp(l - lmax)
                if i % 2 == 1:
                    val = -mag
                else:
                    val = mag
                t = s + val
                if fabs(s) >= fabs(val):
                    c += (s - t) + val
                else:
                    c += (val - t) + s
                s = t
                abs_sum += mag
                err_sum += mag * (fabs(logc[i]) + expo * (fabs(lp) + jx / (1.0 - jx)) + 4.0)
            total = s + c
            if total > 0.0:
                val = total * exp(lmax + log_norm)
                if isfinite(val):
                    out[p] = val
                    bound[p] = EPS * (err_sum + nterms * abs_sum) / total
                else:
                    out[p] = 0.0
                    bound[p] = INFINITY
            else:
                out[p] = 0.0
                bound[p] = INFINITY if abs_sum > 0.0 else 0.0
    return out_arr, bound_arr


def spline_pdf(const double[::1] x, const double[::1] t, long order):
    """Density as a Curry-Schoenberg M-spline on knots ``t`` (length order+1).

    Evaluated with the de Boor-Cox recursion on normalized B-splines; every
    step is a convex combination, so no cancellation occurs.
    """
    cdef Py_ssize_t n = x.shape[0]
    out_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef double* v = <double*>calloc(order + 2, sizeof(double))
    if v == NULL:
        raise MemoryError()
    cdef Py_ssize_t p
    cdef long lo, hi, mid, mu, r, i, a, b, q
    cdef double xi, val, d, scale
    scale = order / (t[order] - t[0])
    try:
        with nogil:
            for p in range(n):
                xi = x[p]
                if not (xi >= t[0] and xi <= t[order]):
                    out[p] = 0.0
                    continue
                # mu: last index with t[mu] <= xi, restricted to [0, order-1]
                lo = 0
                hi = order + 1
                while hi - lo > 1:
                    mid = (lo + hi) // 2
                    if t[mid] <= xi:
                        lo = mid
                    else:
                        hi = mid
                mu = lo
                if mu > order - 1:
                    mu = order - 1
                while mu > 0 and t[mu] == t[mu + 1]:
                    mu -= 1
                for q in range(order + 1):
                    v[q] = 0.0
                v[mu] = 1.0
                for r in range(2, order + 1):
                    a = mu - r + 1
                    if a < 0:
                        a = 0
                    b = mu
                    if b > order - r:
                        b = order - r
                    for i in range(a, b + 1):
                        val = 0.0
                        d = t[i + r - 1] - t[i]
                        if d > 0.0:
                            val = (xi - t[i]) / d * v[i]
                        d = t[i + r] - t[i + 1]
                        if d > 0.0:
                            val += (t[i + r] - xi) / d * v[i + 1]
                        v[i] = val
                out[p] = v[0] * scale
    finally:
        free(v)
    return out_arr


cdef inline void _sift_down(double* h, long size, long pos) noexcept nogil:
    cdef long child
    cdef double item = h[pos]
    while True:
        child = 2 * pos + 1
        if child >= size:
            break
        if child + 1 < size and h[child + 1] < h[child]:
            child += 1
        if h[child] < item:
            h[pos] = h[child]
            pos = child
        else:
            break
    h[pos] = item


cdef inline void _sift_up(double* h, long pos) noexcept nogil:
    cdef long parent
    cdef double item = h[pos]
    while pos > 0:
        parent = (pos - 1) // 2
        if item < h[parent]:
            h[pos] = h[parent]
            pos = parent
        else:
            break
    h[pos] = item


def topk_update(double[::1] heap, long size, const double[::1] chunk):
    """Push ``chunk`` through a min-heap of capacity ``heap.shape[0]``.

    Returns the new heap size. The heap holds the largest values seen so far.
    """
    cdef long cap = heap.shape[0]
    cdef Py_ssize_t n = chunk.shape[0]
    cdef Py_ssize_t p
    cdef double v
    cdef double* h = &heap[0]
    with nogil:
        for p in range(n):
            v = chunk[p]
            if size < cap:
                h[size] = v
                _sift_up(h, size)
                size += 1
            elif v > h[0]:
                h[0] = v
                _sift_down(h, size, 0)
    return size
