"""Digamma, trigamma and exact log-binomials.

The polygamma functions are implemented here rather than taken from scipy so
the moment formulas give identical results on every platform: upward
recurrence to an argument of at least 10, then the asymptotic series.
"""

from __future__ import annotations

import math
from functools import lru_cache

import numpy as np

_SHIFT = 10.0

# Bernoulli-number coefficients B_2n / (2n) for the digamma asymptotic series.
_DIGAMMA_COEFFS = (
    1.0 / 12.0,
    -1.0 / 120.0,
    1.0 / 252.0,
    -1.0 / 240.0,
    1.0 / 132.0,
    -691.0 / 32760.0,
    1.0 / 12.0,
)

# B_2n for the trigamma series: 1/x + 1/(2x^2) + sum B_2n / x^(2n+1).
_TRIGAMMA_COEFFS = (
    1.0 / 6.0,
    -1.0 / 30.0,
    1.0 / 42.0,
    -1.0 / 30.0,
    5.0 / 66.0,
    -691.0 / 2730.0,
    7.0 / 6.0,
)


def _as_positive_array(x):
    arr = np.asarray(x, dtype=np.float64)
    if np.any(~np.isfinite(arr)) or np.any(arr <= 0.0):
        raise ValueError("polygamma functions are implemented for finite positive arguments only")
    return arr


def digamma(x):
    """Digamma function psi(x) for x > 0, scalar or array, accurate to ~1e-15."""
    arr = _as_positive_array(x)
    z = arr.copy()
    acc = np.zeros_like(z)
    small = z < _SHIFT
    while np.any(small):
        acc = np.where(small, acc - 1.0 / np.where(small, z, 1.0), acc)
        z = np.where(small, z + 1.0, z)
        small = z < _SHIFT
    inv2 = 1.0 / (z * z)
    series = np.zeros_like(z)
    for c in reversed(_DIGAMMA_COEFFS):
        series = (series + c) * inv2
    out = acc + np.log(z) - 0.5 / z - series
    return float(out) if out.ndim == 0 else out


def trigamma(x):
    """Trigamma function psi'(x) for x > 0, scalar or array."""
    arr = _as_positive_array(x)
    z = arr.copy()
    acc = np.zeros_like(z)
    small = z < _SHIFT
    while np.any(small):
        zs = np.where(small, z, 1.0)
        acc = np.where(small, acc + 1.0 / (zs * zs), acc)
        z = np.where(small, z + 1.0, z)
        small = z < _SHIFT
    inv = 1.0 / z
    inv2 = inv * inv
    series = np.zeros_like(z)
    for c in reversed(_TRIGAMMA_COEFFS):
        series = (series + c) * inv2
    out = acc + inv + 0.5 * inv2 + series * inv
    return float(out) if out.ndim == 0 else out


@lru_cache(maxsize=256)
def log_binomial_row(n: int, count: int | None = None) -> np.ndarray:
    """``log C(n, i)`` for ``i = 0..count-1`` (default all ``n+1``).

    Uses exact integer binomials, so each entry is the correctly rounded
    logarithm. Cached because the exact density reuses a row per (D, k).
    """
    if count is None:
        count = n + 1
    out = np.empty(count, dtype=np.float64)
    c = 1
    for i in range(count):
        out[i] = math.log(c)
        c = c * (n - i) // (i + 1)
    out.setflags(write=False)
    return out


def log_binomial(n: int, r: int) -> float:
    return math.log(math.comb(n, r))


def neumaier_sum(values) -> float:
    """Compensated (Kahan-Babuska-Neumaier) sum in input order."""
    s = 0.0
    c = 0.0
    for v in values:
        v = float(v)
        t = s + v
        if abs(s) >= abs(v):
            c += (s - t) + v
        else:
            c += (v - t) + s
        s = t
    return s + c
