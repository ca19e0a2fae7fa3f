import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fidsta import _pykernels
from fidsta.kernels import get_backend
from fidsta.orderstat import Dims, rank_pdf

try:
    compiled = get_backend("compiled")
except ImportError:  # pragma: no cover - extension not built
    compiled = None

needs_ext = pytest.mark.skipif(compiled is None, reason="compiled kernels not built")


def _args(n, k):
    p = rank_pdf(Dims(n), k)
    return p, p._logc, p._knots


@needs_ext
@pytest.mark.parametrize("n,k", [(1, 1), (3, 2), (6, 1), (6, 20), (8, 3), (8, 128), (10, 7)])
def test_backends_agree(n, k):
    p, logc, knots = _args(n, k)
    lo, hi = p.support
    xs = np.linspace(0.0, min(1.0, hi * 1.05), 257)
    D = p.dims.dim
    v1, b1 = compiled.series_pdf(xs, logc, D, k, p.log_norm)
    v2, b2 = _pykernels.series_pdf(xs, logc, D, k, p.log_norm)
    ok = (b1 < 1e-11) & (b2 < 1e-11)
    assert np.allclose(v1[ok], v2[ok], rtol=1e-11, atol=0)
    s1 = compiled.spline_pdf(xs, knots, D - 1)
    s2 = _pykernels.spline_pdf(xs, knots, D - 1)
    assert np.allclose(s1, s2, rtol=1e-12, atol=1e-300)


@pytest.mark.parametrize("backend", ["python", pytest.param("compiled", marks=needs_ext)])
@pytest.mark.parametrize("n,k", [(4, 1), (6, 3), (8, 2), (8, 10)])
def test_spline_equals_accurate_series(backend, n, k):
    impl = get_backend(backend)
    p, logc, knots = _args(n, k)
    D = p.dims.dim
    xs = np.linspace(*p.support, 401)[1:-1]
    vals, bound = impl.series_pdf(xs, logc, D, k, p.log_norm)
    spl = impl.spline_pdf(xs, knots, D - 1)
    good = bound < 1e-11
    assert good.sum() > 100
    assert np.allclose(vals[good], spl[good], rtol=1e-9, atol=1e-12 * spl.max())


@pytest.mark.parametrize("backend", ["python", pytest.param("compiled", marks=needs_ext)])
@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(0, 1e6, allow_nan=False), min_size=0, max_size=300), st.integers(1, 40))
def test_topk_update(backend, values, cap):
    impl = get_backend(backend)
    heap = np.empty(cap)
    size = 0
    data = np.asarray(values, dtype=np.float64)
    for chunk in np.array_split(data, 4) if data.size else [data]:
        size = impl.topk_update(heap, size, np.ascontiguousarray(chunk))
    got = np.sort(heap[:size])[::-1]
    want = np.sort(data)[::-1][:cap]
    assert np.array_equal(got, want)


def test_pure_python_env_switch():
    code = "import fidsta.kernels as k; print(k.BACKEND)"
    out = subprocess.run([sys.executable, "-c", code], env={"FIDSTA_PURE_PYTHON": "1", "PATH": ""},
                         capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"


def test_unknown_backend():
    with pytest.raises(ValueError):
        get_backend("fortran")
