import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fidsta.special import digamma, log_binomial, log_binomial_row, neumaier_sum, trigamma


@pytest.mark.parametrize("x", [1e-3, 0.5, 1.0, 2.0, 3.0, 9.99, 10.0, 17.5, 1e3, 2.0**40])
def test_digamma_against_mpmath(x):
    ref = float(mpmath.digamma(x))
    assert digamma(x) == pytest.approx(ref, rel=1e-13, abs=1e-13)


@pytest.mark.parametrize("x", [1e-3, 0.5, 1.0, 2.0, 9.5, 10.0, 64.0, 1e5, 2.0**40])
def test_trigamma_against_mpmath(x):
    ref = float(mpmath.psi(1, x))
    assert trigamma(x) == pytest.approx(ref, rel=1e-13)


def test_known_values():
    assert digamma(1.0) == pytest.approx(-0.5772156649015329, abs=1e-15)
    assert trigamma(1.0) == pytest.approx(math.pi**2 / 6, rel=1e-15)
    # psi(3) - psi(1) = 3/2
    assert digamma(3.0) - digamma(1.0) == pytest.approx(1.5, abs=1e-15)


@settings(max_examples=200, deadline=None)
@given(st.floats(min_value=1e-2, max_value=1e6))
def test_recurrences(x):
    assert digamma(x + 1) - digamma(x) == pytest.approx(1 / x, rel=1e-12, abs=1e-12)
    assert trigamma(x) - trigamma(x + 1) == pytest.approx(1 / x**2, rel=1e-10)


def test_vectorized_matches_scalar():
    xs = np.array([0.3, 1.0, 7.0, 12.0, 1e4])
    assert np.array_equal(digamma(xs), np.array([digamma(float(v)) for v in xs]))
    assert np.array_equal(trigamma(xs), np.array([trigamma(float(v)) for v in xs]))


@pytest.mark.parametrize("bad", [0.0, -1.0, float("nan"), float("inf")])
def test_domain(bad):
    with pytest.raises(ValueError):
        digamma(bad)


def test_log_binomial():
    row = log_binomial_row(30)
    assert row.shape == (31,)
    for r in range(31):
        assert row[r] == pytest.approx(math.log(math.comb(30, r)), abs=1e-13)
    assert log_binomial(5000, 2500) == pytest.approx(float(mpmath.log(mpmath.binomial(5000, 2500))), rel=1e-15)
    assert not row.flags.writeable


def test_neumaier_sum_cancellation():
    vals = [1e16, 1.0, -1e16, 1.0]
    assert neumaier_sum(vals) == 2.0
