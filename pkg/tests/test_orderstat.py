import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from conftest import integrate_moments
from fidsta.errors import DomainError, ExactModeCeilingError
from fidsta.orderstat import (
    Dims,
    Form,
    approx_pdf,
    digamma_mean,
    exact_pdf,
    pt_pdf,
    rank_means,
    rank_pdf,
    second_moment,
)


def series_oracle(D, k, x, dps=80):
    """The alternating binomial series in high precision."""
    with mpmath.workdps(dps):
        x = mpmath.mpf(x)
        total = mpmath.mpf(0)
        for j in range(k, D + 1):
            base = 1 - j * x
            if base <= 0:
                break
            total += mpmath.binomial(D - k, j - k) * (-1) ** j * base ** (D - 2)
        norm = (-1) ** k * D * (D - 1) * mpmath.binomial(D - 1, k - 1)
        return float(norm * total)


# --- Dims -------------------------------------------------------------------

def test_dims():
    d = Dims(5)
    assert d.dim == 32
    assert Dims.from_dim(1024) == Dims(10)
    for bad in (0, -1, 65, 2.0, True):
        with pytest.raises(DomainError):
            Dims(bad)
    with pytest.raises(DomainError):
        Dims.from_dim(12)


def test_form_resolve():
    assert Form.resolve("auto", Dims(10)) is Form.EXACT
    assert Form.resolve("auto", Dims(11)) is Form.APPROX
    assert Form.resolve("exact", Dims(20)) is Form.EXACT
    with pytest.raises(DomainError):
        Form.resolve("bogus", Dims(3))


# --- exact density ----------------------------------------------------------

def test_d2_examples():
    d = Dims(1)
    assert exact_pdf(d, 1, 0.75) == 2.0
    assert exact_pdf(d, 1, 0.25) == 0.0
    assert exact_pdf(d, 1, 1.0) == pytest.approx(2.0, abs=1e-12)
    assert exact_pdf(d, 2, 0.25) == pytest.approx(2.0, abs=1e-12)
    assert exact_pdf(d, 2, 0.75) == 0.0


@pytest.mark.parametrize("D,k", [(16, 1), (16, 5), (16, 16), (64, 1), (64, 10), (64, 33), (256, 3), (256, 40),
                                 (256, 200), (1024, 25)])
def test_exact_matches_high_precision_series(D, k):
    d = Dims.from_dim(D)
    m = second_moment(d, k)
    sd = math.sqrt(m.variance)
    lo, hi = rank_pdf(d, k).support
    xs = np.clip(m.mean + sd * np.array([-3, -1.5, -0.5, 0.0, 0.7, 2.0, 4.0]), lo + 1e-300, hi)
    got = exact_pdf(d, k, xs)
    peak = max(got)
    for x, g in zip(xs, got):
        ref = series_oracle(D, k, float(x))
        assert g == pytest.approx(ref, rel=1e-9, abs=1e-12 * peak)


def test_support_is_exact():
    d = Dims(6)
    for k in (1, 2, 7, 64):
        xs = np.nextafter(1.0 / k, 2.0) + np.array([0.0, 1e-9, 0.1])
        xs = xs[xs <= 1.0]
        assert np.all(exact_pdf(d, k, xs) == 0.0)
        assert exact_pdf(d, k, 1.5) == 0.0
        assert exact_pdf(d, k, -0.1) == 0.0


def test_top_rank_vanishes_below_uniform():
    d = Dims(5)
    assert exact_pdf(d, 1, 0.5 / d.dim) == 0.0


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 7), st.data())
def test_exact_nonnegative_and_finite(n, data):
    d = Dims(n)
    k = data.draw(st.integers(1, d.dim))
    x = data.draw(st.floats(0.0, 1.0))
    v = exact_pdf(d, k, x)
    assert math.isfinite(v) and v >= 0.0


@pytest.mark.parametrize("D", [2, 4, 16, 64])
def test_normalization_and_moments(D):
    d = Dims.from_dim(D)
    for k in range(1, D + 1):
        p = rank_pdf(d, k)
        m = second_moment(d, k)
        lo, hi = p.support
        z, mean, second = integrate_moments(p.pdf, lo, hi, [m.mean])
        assert z == pytest.approx(1.0, abs=1e-9)
        assert mean == pytest.approx(m.mean, abs=1e-8)
        assert second == pytest.approx(m.second_moment, abs=1e-8)


def test_decomposition_identity_d16():
    d = Dims(4)
    xs = np.linspace(0.0, 1.0, 1001)
    total = sum(exact_pdf(d, k, xs) for k in range(1, 17))
    assert np.max(np.abs(total - d.dim * pt_pdf(d, xs))) < 1e-6


def test_ceiling():
    rank_pdf(Dims(14), 1)
    with pytest.raises(ExactModeCeilingError, match="approx"):
        rank_pdf(Dims(15), 1)


@pytest.mark.parametrize("k", [0, 17, -2, 1.5])
def test_rank_domain(k):
    with pytest.raises(DomainError):
        rank_pdf(Dims(4), k)


def test_nan_argument_rejected():
    with pytest.raises(DomainError):
        exact_pdf(Dims(3), 1, float("nan"))


def test_shape_regimes():
    d = Dims(10)
    # k = 1 is right-skewed: mean above mode
    p = rank_pdf(d, 1)
    m = second_moment(d, 1)
    xs = np.linspace(*p.support, 20001)
    mode = xs[np.argmax(p.pdf(xs))]
    assert m.mean > mode
    # k = D/2 is close to Gaussian
    k = d.dim // 2
    p = rank_pdf(d, k)
    m = second_moment(d, k)
    sd = math.sqrt(m.variance)
    third = quad(lambda x: (x - m.mean) ** 3 * p.pdf(x), m.mean - 12 * sd, m.mean + 12 * sd, limit=400)[0]
    assert abs(third / sd**3) < 0.2


def test_rank_pdf_is_cached_and_immutable():
    d = Dims(5)
    assert rank_pdf(d, 3) is rank_pdf(d, 3)
    with pytest.raises(Exception):
        rank_pdf(d, 3).rank = 4


# --- approximate density ----------------------------------------------------

def test_approx_normalization():
    d = Dims(12)
    p = rank_pdf(d, 1, "approx")
    z = quad(p.pdf, 0, 1, points=[digamma_mean(d, 1)], limit=400, epsabs=1e-13)[0]
    assert z == pytest.approx(1.0, abs=1e-6)


@pytest.mark.parametrize("n,k", [(5, 1), (8, 3), (12, 20), (20, 5), (40, 2), (64, 1)])
def test_approx_closed_form_norm_matches_quadrature(n, k):
    d = Dims(n)
    p = rank_pdf(d, k, "approx")
    m = digamma_mean(d, k)
    sd = math.sqrt(trigamma_var(d, k))
    lo, hi = max(0.0, m - 40 * sd), min(1.0, m + 60 * sd)
    z = quad(p.pdf, lo, hi, points=[m], limit=500, epsabs=0, epsrel=1e-12)[0]
    assert z == pytest.approx(1.0, rel=1e-9)


def trigamma_var(d, k):
    return max(second_moment(d, k).variance, (1.0 / d.dim) ** 2 * 1e-6)


def test_approx_means_close_to_digamma():
    d = Dims(10)
    for k in range(1, 9):
        p = rank_pdf(d, k, "approx")
        mean = quad(lambda x: x * p.pdf(x), 0, 1, points=[digamma_mean(d, k)], limit=400)[0]
        assert mean == pytest.approx(digamma_mean(d, k), rel=0.02)


def _sup_gap(n, k, points=20001):
    d = Dims(n)
    xs = np.linspace(0.0, 1.0 / k, points)
    e = exact_pdf(d, k, xs)
    return np.max(np.abs(e - approx_pdf(d, k, xs))) / e.max()


@pytest.mark.xfail(strict=True, reason="the large-D form differs from the exact density by 13% of the peak "
                                       "at D=256, k=3; the 5% bound only holds from D~2^11")
def test_approx_vs_exact_d256():
    assert _sup_gap(8, 3) <= 0.05


def test_approx_gap_shrinks_with_dim():
    gaps = [_sup_gap(n, 3) for n in (6, 8, 10)]
    assert gaps[0] > gaps[1] > gaps[2]
    assert gaps[2] < 0.5 * gaps[0]


def test_approx_k_max():
    d = Dims(12)
    rank_pdf(d, 48, "approx")
    with pytest.raises(DomainError, match="k_max"):
        rank_pdf(d, 49, "approx")
    rank_pdf(d, 100, "approx", k_max=100)


def test_approx_large_n_finite():
    d = Dims(64)
    m = digamma_mean(d, 1)
    v = approx_pdf(d, 1, m)
    assert math.isfinite(v) and v > 0


# --- moments ----------------------------------------------------------------

def test_mean_examples():
    assert digamma_mean(Dims(1), 1) == pytest.approx(0.75, abs=1e-15)
    assert digamma_mean(Dims(1), 2) == pytest.approx(0.25, abs=1e-15)
    m = second_moment(Dims(1), 1)
    assert m.second_moment == pytest.approx(7 / 12, abs=1e-14)


def test_mean_differences_and_sum():
    d = Dims(4)
    means = rank_means(d, 16)
    assert np.allclose(-np.diff(means), 1.0 / (np.arange(1, 16) * 16), atol=1e-12, rtol=0)
    assert math.fsum(means) == pytest.approx(1.0, abs=1e-12)
    assert np.all(np.diff(means) < 0)


def test_rank_means_match_scalar():
    d = Dims(9)
    means = rank_means(d, 40)
    assert all(means[k - 1] == digamma_mean(d, k) for k in range(1, 41))


def test_variance_consistency():
    for n in (1, 4, 10, 30):
        d = Dims(n)
        for k in {1, 2, d.dim // 2, d.dim}:
            m = second_moment(d, k)
            assert m.variance == pytest.approx(m.second_moment - m.mean**2, rel=1e-15, abs=0)
            assert m.variance >= 0


# --- Porter-Thomas ----------------------------------------------------------

def test_pt_pdf():
    assert pt_pdf(Dims(1), 0.3) == 1.0
    assert pt_pdf(Dims(6), 0.0) == 63.0
    assert pt_pdf(Dims(6), 1.0) == 0.0
    D = 2.0**40
    assert pt_pdf(Dims(40), 1e-13) == pytest.approx((D - 1) * math.exp((D - 2) * math.log1p(-1e-13)), rel=1e-12)
