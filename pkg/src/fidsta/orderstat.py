"""Order statistics of Haar-random output probabilities.

For a Haar-random state of N qubits the D = 2**N output probabilities are
uniform on the probability simplex. This module provides the density of the
k-th largest probability, exactly (finite D) and in the large-D low-rank
approximation, together with closed-form moments and the Porter-Thomas
marginal.

Exact density
-------------
The density is the alternating binomial series

    P_k(x) = Nk * sum_{j=k}^{jmax} C(D-k, j-k) (-1)^j (1 - j x)^(D-2),
    Nk = (-1)^k D (D-1) C(D-1, k-1),   jmax = min(D, largest j with j x < 1).

The series is summed term-by-term in log-magnitude with compensated
summation. It cancels catastrophically once the rank or the argument grows,
so every series value carries an a-posteriori relative error bound; values
whose bound exceeds ``SERIES_REL_TOL`` are recomputed from the equivalent
M-spline form: the k-th largest probability has the same law as
``sum_{m=k}^{D} W_m / m`` with W flat-Dirichlet, whose density is the
Curry-Schoenberg M-spline on knots {0 (k-1 times), 1/D, ..., 1/k}. The
de Boor-Cox recursion evaluates it without cancellation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from functools import lru_cache

import numpy as np
from scipy.special import betainc

from . import kernels
from .errors import DomainError, ExactModeCeilingError, NumericError
from .special import digamma, log_binomial_row, trigamma

EXACT_DIM_CEILING = 2**14
SERIES_REL_TOL = 1e-11
AUTO_EXACT_MAX_DIM = 2**10
MAX_QUBITS = 64


@dataclass(frozen=True)
class Dims:
    """System size: ``n_qubits`` and Hilbert dimension ``dim == 2**n_qubits``."""

    n_qubits: int
    dim: int = field(init=False)

    def __post_init__(self):
        n = self.n_qubits
        if isinstance(n, bool) or not isinstance(n, (int, np.integer)):
            raise DomainError(f"n_qubits must be an integer, got {n!r}")
        if not 1 <= n <= MAX_QUBITS:
            raise DomainError(f"n_qubits must be in [1, {MAX_QUBITS}], got {n}")
        object.__setattr__(self, "n_qubits", int(n))
        object.__setattr__(self, "dim", 2 ** int(n))

    @classmethod
    def from_dim(cls, dim: int) -> "Dims":
        dim = int(dim)
        if dim < 2 or dim & (dim - 1):
            raise DomainError(f"dimension must be a power of two >= 2, got {dim}")
        return cls(dim.bit_length() - 1)


class Form(str, Enum):
    EXACT = "exact"
    APPROX = "approx"

    @classmethod
    def resolve(cls, form, dims: Dims) -> "Form":
        """Map ``"auto"`` to exact for D <= 2**10 and approx above."""
        if isinstance(form, Form):
            return form
        if form in (None, "auto"):
            return cls.EXACT if dims.dim <= AUTO_EXACT_MAX_DIM else cls.APPROX
        try:
            return cls(form)
        except ValueError:
            raise DomainError(f"unknown distribution form {form!r}") from None


@dataclass(frozen=True)
class MomentSet:
    mean: float
    second_moment: float
    variance: float


def _check_rank(dims: Dims, k) -> int:
    if isinstance(k, bool) or not isinstance(k, (int, np.integer)):
        raise DomainError(f"rank must be an integer, got {k!r}")
    k = int(k)
    if not 1 <= k <= dims.dim:
        raise DomainError(f"rank k={k} outside [1, D={dims.dim}]")
    return k


def default_k_max(dims: Dims) -> int:
    return min(dims.dim, 4 * dims.n_qubits)


def _log1mexp(y: np.ndarray) -> np.ndarray:
    """log(1 - exp(-y)) for y >= 0, accurate at both ends."""
    with np.errstate(divide="ignore"):
        return np.where(y < math.log(2.0), np.log(-np.expm1(-y)), np.log1p(-np.exp(-y)))


def _approx_log_norm(dims: Dims, k: int) -> float:
    # With u = exp(-(D-2)x) the integral over [0,1] is
    # B(k, D-k+1) * (1 - I_{exp(-(D-2))}(k, D-k+1)) / (D-2).
    D = dims.dim
    a = D - 2
    log_beta = math.lgamma(k) - math.fsum(math.log(D - k + 1 + i) for i in range(k))
    tail = 0.0
    if a < 745:
        tail = float(betainc(k, D - k + 1, math.exp(-a)))
    log_z = log_beta + math.log1p(-tail) - math.log(a)
    if not math.isfinite(log_z):
        raise NumericError(f"approximate normalization overflowed for D={D}, k={k}")
    return -log_z


@dataclass(frozen=True, eq=False)
class RankPdf:
    """Density of the rank-k output probability of a Haar-random state.

    Build with :func:`rank_pdf`; normalization data are computed once at
    construction and the object is immutable afterwards.
    """

    dims: Dims
    rank: int
    form: Form
    log_norm: float
    _knots: np.ndarray | None = field(default=None, repr=False)
    _logc: np.ndarray | None = field(default=None, repr=False)

    @property
    def support(self) -> tuple[float, float]:
        if self.form is Form.APPROX:
            return 0.0, 1.0
        lo = 1.0 / self.dims.dim if self.rank == 1 else 0.0
        return lo, 1.0 / self.rank

    def pdf(self, x):
        arr = np.asarray(x, dtype=np.float64)
        flat = np.ascontiguousarray(arr.reshape(-1))
        if np.isnan(flat).any():
            raise DomainError("pdf argument contains NaN")
        if self.form is Form.EXACT:
            out = self._exact(flat)
        else:
            with np.errstate(over="ignore"):
                out = np.exp(self._approx_log(flat))
        out = out.reshape(arr.shape)
        return float(out) if out.ndim == 0 else out

    def logpdf(self, x):
        arr = np.asarray(x, dtype=np.float64)
        flat = np.ascontiguousarray(arr.reshape(-1))
        if np.isnan(flat).any():
            raise DomainError("pdf argument contains NaN")
        if self.form is Form.EXACT:
            with np.errstate(divide="ignore"):
                out = np.log(self._exact(flat))
        else:
            out = self._approx_log(flat)
        out = out.reshape(arr.shape)
        return float(out) if out.ndim == 0 else out

    def _exact(self, x: np.ndarray) -> np.ndarray:
        D, k = self.dims.dim, self.rank
        vals, bound = kernels.series_pdf(x, self._logc, D, k, self.log_norm)
        redo = bound > SERIES_REL_TOL
        if redo.any():
            vals[redo] = kernels.spline_pdf(np.ascontiguousarray(x[redo]), self._knots, D - 1)
        return vals

    def _approx_log(self, x: np.ndarray) -> np.ndarray:
        D, k = self.dims.dim, self.rank
        a = float(D - 2)
        out = np.full(x.shape, -np.inf)
        ok = (x > 0.0) & (x <= 1.0)
        y = a * x[ok]
        out[ok] = self.log_norm - k * y + (D - k) * _log1mexp(y)
        return out

    def moments(self) -> MomentSet:
        """Closed-form moments of the exact distribution."""
        return second_moment(self.dims, self.rank)


@lru_cache(maxsize=4096)
def rank_pdf(dims: Dims, k: int, form="exact", k_max: int | None = None) -> RankPdf:
    """Construct (and cache) the rank-k density for ``form`` in {exact, approx, auto}."""
    k = _check_rank(dims, k)
    form = Form.resolve(form, dims)
    D = dims.dim
    if form is Form.EXACT:
        if D > EXACT_DIM_CEILING:
            raise ExactModeCeilingError(D, EXACT_DIM_CEILING)
        log_norm = math.log(D * (D - 1) * math.comb(D - 1, k - 1))
        knots = np.concatenate([np.zeros(k - 1), 1.0 / np.arange(D, k - 1, -1, dtype=np.float64)])
        knots.setflags(write=False)
        return RankPdf(dims, k, form, log_norm, knots, log_binomial_row(D - k))
    if D < 4:
        raise DomainError("the large-D approximation needs D >= 4")
    limit = default_k_max(dims) if k_max is None else int(k_max)
    if k > limit:
        raise DomainError(
            f"large-D approximation is for low ranks: k={k} exceeds k_max={limit}"
        )
    return RankPdf(dims, k, form, _approx_log_norm(dims, k))


def exact_pdf(dims: Dims, k: int, x):
    """Exact density of the k-th largest output probability at ``x``."""
    return rank_pdf(dims, k, Form.EXACT).pdf(x)


def approx_pdf(dims: Dims, k: int, x, k_max: int | None = None):
    """Low-rank large-D approximation ``N exp(-k(D-2)x) (1-exp(-(D-2)x))^(D-k)``."""
    return rank_pdf(dims, k, Form.APPROX, k_max).pdf(x)


def digamma_mean(dims: Dims, k: int) -> float:
    """Mean of the k-th largest probability, ``(psi(D+1) - psi(k)) / D``."""
    k = _check_rank(dims, k)
    D = float(dims.dim)
    return (digamma(D + 1.0) - digamma(float(k))) / D


def rank_means(dims: Dims, K: int) -> np.ndarray:
    """``digamma_mean`` for ranks 1..K as an array."""
    K = _check_rank(dims, K)
    D = float(dims.dim)
    return (digamma(D + 1.0) - digamma(np.arange(1, K + 1, dtype=np.float64))) / D


def second_moment(dims: Dims, k: int) -> MomentSet:
    k = _check_rank(dims, k)
    D = float(dims.dim)
    mean = digamma_mean(dims, k)
    second = D * mean * mean / (D + 1.0) + (trigamma(float(k)) - trigamma(D + 1.0)) / (D * (D + 1.0))
    return MomentSet(mean=mean, second_moment=second, variance=second - mean * mean)


def pt_pdf(dims: Dims, x):
    """Porter-Thomas marginal ``(D-1)(1-x)^(D-2)`` on [0, 1]."""
    arr = np.asarray(x, dtype=np.float64)
    D = dims.dim
    out = np.zeros(arr.shape)
    inside = (arr >= 0.0) & (arr <= 1.0)
    if D == 2:
        out[inside] = 1.0
    else:
        xi = arr[inside]
        with np.errstate(divide="ignore"):
            out[inside] = (D - 1) * np.exp((D - 2) * np.log1p(-xi))
    return float(out) if out.ndim == 0 else out
