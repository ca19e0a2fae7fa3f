import numpy as np
import pytest
from scipy.integrate import quad_vec

from fidsta.orderstat import Dims


@pytest.fixture
def dims12():
    return Dims(12)


def integrate_moments(pdf, lo, hi, points=()):
    """Adaptive quadrature of (1, x, x^2) * pdf(x) over [lo, hi] in one pass."""

    def f(x):
        v = pdf(x)
        return np.array([v, x * v, x * x * v])

    pts = [p for p in points if lo < p < hi]
    res, _ = quad_vec(f, lo, hi, epsabs=1e-13, epsrel=1e-12, points=pts or None, limit=2000)
    return res
