"""Global depolarizing noise on ranked output probabilities.

A fidelity-f channel maps every output probability ``p`` to
``f p + (1 - f)/D``. The map is computed as ``1/D + f (p - 1/D)`` so that
``1/D`` is an exact fixed point in floating point and the ordering of any
sorted vector is preserved.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import DegenerateChannelError, DomainError
from .orderstat import Dims, RankPdf, digamma_mean, rank_means


class JacobianMode(str, Enum):
    """Whether the noisy density carries the 1/f change-of-variables factor."""

    WITH_JACOBIAN = "with-jacobian"
    PAPER_LITERAL = "paper-literal"

    @classmethod
    def parse(cls, value) -> "JacobianMode":
        if isinstance(value, JacobianMode):
            return value
        if value in (True, "on", "with-jacobian", None):
            return cls.WITH_JACOBIAN
        if value in (False, "off", "paper-literal"):
            return cls.PAPER_LITERAL
        raise DomainError(f"unknown jacobian mode {value!r}")


@dataclass(frozen=True)
class NoiseModel:
    fidelity: float

    def __post_init__(self):
        f = float(self.fidelity)
        if not 0.0 <= f <= 1.0:
            raise DomainError(f"fidelity must lie in [0, 1], got {self.fidelity!r}")
        object.__setattr__(self, "fidelity", f)


def apply_noise(p, noise: NoiseModel, dims: Dims):
    """Noisy probability ``f p + (1 - f)/D`` (scalar or array)."""
    f = noise.fidelity
    u = 1.0 / dims.dim
    arr = np.asarray(p, dtype=np.float64)
    if f == 1.0:
        out = arr.copy()
    elif f == 0.0:
        out = np.full(arr.shape, u)
    else:
        out = u + f * (arr - u)
    return float(out) if out.ndim == 0 else out


def _invert(x: np.ndarray, f: float, dims: Dims) -> np.ndarray:
    if f == 1.0:
        return x
    u = 1.0 / dims.dim
    return u + (x - u) / f


@dataclass(frozen=True, eq=False)
class DeformedRankPdf:
    """Rank-k density of the noisy probabilities.

    ``pdf(x) = base.pdf(x_f) / f`` with ``f x_f = x - (1 - f)/D``; the
    paper-literal mode drops the ``1/f`` factor and is not normalized.
    """

    base: RankPdf
    noise: NoiseModel
    jacobian_mode: JacobianMode = JacobianMode.WITH_JACOBIAN

    def __post_init__(self):
        object.__setattr__(self, "jacobian_mode", JacobianMode.parse(self.jacobian_mode))

    @property
    def support(self) -> tuple[float, float]:
        dims = self.base.dims
        hi = self.base.support[1]
        return apply_noise(0.0, self.noise, dims), apply_noise(hi, self.noise, dims)

    def _check(self):
        if self.noise.fidelity == 0.0:
            raise DegenerateChannelError(
                "fidelity 0 collapses every probability to 1/D; the density is a point mass"
            )

    def pdf(self, x):
        self._check()
        f = self.noise.fidelity
        arr = np.asarray(x, dtype=np.float64)
        vals = np.asarray(self.base.pdf(_invert(arr, f, self.base.dims)))
        if self.jacobian_mode is JacobianMode.WITH_JACOBIAN and f != 1.0:
            vals = vals / f
        return float(vals) if vals.ndim == 0 else vals

    def logpdf(self, x):
        self._check()
        f = self.noise.fidelity
        arr = np.asarray(x, dtype=np.float64)
        vals = np.asarray(self.base.logpdf(_invert(arr, f, self.base.dims)))
        if self.jacobian_mode is JacobianMode.WITH_JACOBIAN and f != 1.0:
            vals = vals - math.log(f)
        return float(vals) if vals.ndim == 0 else vals


def deformed_pdf(d: DeformedRankPdf, x):
    return d.pdf(x)


def noisy_mean(dims: Dims, k: int, noise: NoiseModel) -> float:
    """Mean rank-k probability after the channel: ``f <p_k> + (1 - f)/D``."""
    return apply_noise(digamma_mean(dims, k), noise, dims)


def noisy_rank_means(dims: Dims, K: int, noise: NoiseModel) -> np.ndarray:
    return apply_noise(rank_means(dims, K), noise, dims)
