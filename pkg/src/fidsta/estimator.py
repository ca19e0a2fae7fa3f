"""Maximum-likelihood fidelity estimation from top-ranked outcomes.

Two likelihoods are provided:

* probability-based: each empirical probability ``p_k = n_k / S`` is scored
  against the noise-deformed rank-k density, summed over selected ranks and
  circuit realizations;
* count-based: the raw counts are treated as Poisson with mean
  ``S p_k(f)``, ``p_k(f) = f <p_k> + (1 - f)/D``, dropping f-independent
  terms.

Both are maximized over f in [0, 1] by a coarse grid scan followed by
golden-section refinement. Log-likelihood sums use ``math.fsum`` so results
do not depend on evaluation order.
"""

from __future__ import annotations

import logging
import math
import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import DomainError, EstimationFailed
from .noise import DeformedRankPdf, JacobianMode, NoiseModel
from .orderstat import Dims, Form, rank_means, rank_pdf

log = logging.getLogger(__name__)

DEFAULT_GRID = 200
DEFAULT_XTOL = 1e-6
TIE_TOL = 1e-12
_INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


class Method(str, Enum):
    PROB = "prob"
    COUNT = "count"


@dataclass(frozen=True)
class MeasurementRecord:
    """Top-K ranked counts of one circuit realization.

    ``counts[i]`` is the count of the (i+1)-th most frequent bitstring. Counts
    are the source of truth; probabilities are derived as ``n_k / shots``.
    ``truncated`` flags a record holding fewer ranks than were requested.
    """

    circuit_id: str
    shots: int
    counts: tuple[int, ...]
    truncated: bool = False

    def __post_init__(self):
        counts = tuple(int(c) for c in self.counts)
        object.__setattr__(self, "counts", counts)
        object.__setattr__(self, "shots", int(self.shots))
        object.__setattr__(self, "circuit_id", str(self.circuit_id))
        if self.shots < 1:
            raise DomainError(f"{self.circuit_id}: shots must be positive, got {self.shots}")
        if not counts:
            raise DomainError(f"{self.circuit_id}: record holds no ranked counts")
        if any(c < 0 for c in counts):
            raise DomainError(f"{self.circuit_id}: negative count")
        if any(a < b for a, b in zip(counts, counts[1:])):
            raise DomainError(f"{self.circuit_id}: counts must be sorted non-increasing")
        if sum(counts) > self.shots:
            raise DomainError(f"{self.circuit_id}: retained counts exceed shots")

    @property
    def n_ranks(self) -> int:
        return len(self.counts)

    @property
    def ranked_counts(self) -> list[tuple[int, int]]:
        return [(k, n) for k, n in enumerate(self.counts, start=1)]

    @property
    def ranked_probs(self) -> list[tuple[int, float]]:
        return [(k, n / self.shots) for k, n in enumerate(self.counts, start=1)]

    def probs(self) -> np.ndarray:
        return np.asarray(self.counts, dtype=np.float64) / self.shots

    def to_dict(self) -> dict:
        return {
            "circuit_id": self.circuit_id,
            "shots": self.shots,
            "counts": list(self.counts),
            "truncated": self.truncated,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MeasurementRecord":
        return cls(d["circuit_id"], d["shots"], tuple(d["counts"]), bool(d.get("truncated", False)))


_RANGE_RE = re.compile(r"^\s*(\d+)\s*(?:\.\.|-|:)\s*(\d+)\s*$")


@dataclass(frozen=True)
class RankSelection:
    """A non-empty set of ranks K* used in the likelihood."""

    ranks: tuple[int, ...]
    description: str = ""

    def __post_init__(self):
        ranks = tuple(sorted({int(k) for k in self.ranks}))
        if not ranks:
            raise DomainError("rank selection is empty")
        if ranks[0] < 1:
            raise DomainError("ranks start at 1")
        object.__setattr__(self, "ranks", ranks)
        if not self.description:
            object.__setattr__(self, "description", _describe(ranks))

    @property
    def max_rank(self) -> int:
        return self.ranks[-1]

    def __iter__(self):
        return iter(self.ranks)

    def __len__(self):
        return len(self.ranks)

    @classmethod
    def contiguous(cls, first: int, last: int) -> "RankSelection":
        return cls(tuple(range(first, last + 1)), f"{first}..{last}")

    @classmethod
    def sparse(cls, first: int, last: int, step: int) -> "RankSelection":
        """Every ``step``-th rank, to reduce correlations between ranks."""
        return cls(tuple(range(first, last + 1, step)), f"{first}..{last} step {step}")

    @classmethod
    def parse(cls, text: str) -> "RankSelection":
        """Parse ``"1..20"``, ``"3-6"`` or ``"1,5,9"`` (ranges may be mixed in)."""
        ranks: list[int] = []
        try:
            for part in str(text).split(","):
                if not part.strip():
                    continue
                m = _RANGE_RE.match(part)
                if m:
                    lo, hi = int(m.group(1)), int(m.group(2))
                    if hi < lo:
                        raise DomainError(f"empty rank range {part!r}")
                    ranks.extend(range(lo, hi + 1))
                else:
                    ranks.append(int(part))
        except ValueError as exc:
            raise DomainError(f"cannot parse rank selection {text!r}") from exc
        return cls(tuple(ranks), str(text).strip())

    def check_available(self, n_ranks: int, what: str = "record"):
        if self.max_rank > n_ranks:
            raise DomainError(f"rank {self.max_rank} requested but {what} holds only {n_ranks} ranks")


def _describe(ranks: tuple[int, ...]) -> str:
    if ranks == tuple(range(ranks[0], ranks[-1] + 1)) and len(ranks) > 2:
        return f"{ranks[0]}..{ranks[-1]}"
    return ",".join(str(k) for k in ranks)


@dataclass(frozen=True, eq=False)
class LikelihoodCurve:
    """Sampled log-likelihood with its located maximum.

    ``width`` is ``1/sqrt(-d2 lnL/df2)`` at ``f_hat``; it is NaN when the
    maximum sits on the boundary of [0, 1] (``at_boundary``) or the curve is
    flat there.
    """

    f: np.ndarray
    loglik: np.ndarray
    f_hat: float
    width: float
    method: Method | None
    at_boundary: bool
    loglik_max: float

    @property
    def grid(self) -> list[tuple[float, float]]:
        return list(zip(self.f.tolist(), self.loglik.tolist()))


@dataclass(frozen=True)
class EstimationResult:
    f_hat: float
    width: float
    method: Method
    ranks_used: RankSelection
    circuits_used: tuple[str, ...]
    jacobian_mode: JacobianMode
    at_boundary: bool = False
    form: Form | None = None
    curve: LikelihoodCurve | None = field(default=None, compare=False, repr=False)

    def to_dict(self) -> dict:
        return {
            "f_hat": self.f_hat,
            "width": self.width if math.isfinite(self.width) else None,
            "at_boundary": self.at_boundary,
            "method": self.method.value,
            "ranks_used": list(self.ranks_used.ranks),
            "rank_selection": self.ranks_used.description,
            "circuits_used": list(self.circuits_used),
            "jacobian_mode": self.jacobian_mode.value,
            "form": self.form.value if self.form is not None else None,
        }


# ---------------------------------------------------------------------------
# likelihoods


class ProbabilityLikelihood:
    """``f -> sum_m sum_k ln P_k(p_k^m; N, f)`` for fixed observations.

    ``observations`` maps rank k to the array of observed probabilities at
    that rank (one entry per realization).
    """

    method = Method.PROB

    def __init__(self, observations: dict[int, np.ndarray], dims: Dims, *, form="auto",
                 jacobian=JacobianMode.WITH_JACOBIAN, labels: dict[int, Sequence[str]] | None = None,
                 k_max: int | None = None):
        self.dims = dims
        self.form = Form.resolve(form, dims)
        self.jacobian = JacobianMode.parse(jacobian)
        self.observations = {int(k): np.ascontiguousarray(v, dtype=np.float64)
                             for k, v in sorted(observations.items())}
        if not self.observations:
            raise DomainError("no observations")
        self.labels = labels or {}
        km = k_max if self.form is Form.APPROX else None
        self._bases = {k: rank_pdf(dims, k, self.form, km) for k in self.observations}
        allobs = np.concatenate(list(self.observations.values()))
        self._n_obs = allobs.size
        self._all_uniform = bool(np.all(np.abs(allobs * dims.dim - 1.0) <= 1e-12))

    def terms(self, f: float) -> np.ndarray:
        """Per-observation log-densities at fidelity ``f`` (rank-major order)."""
        if not 0.0 < f <= 1.0:
            raise DomainError(f"per-observation terms need f in (0, 1], got {f}")
        noise = NoiseModel(f)
        parts = [
            np.atleast_1d(DeformedRankPdf(self._bases[k], noise, self.jacobian).logpdf(obs))
            for k, obs in self.observations.items()
        ]
        return np.concatenate(parts)

    def __call__(self, f: float) -> float:
        f = float(f)
        if f <= 0.0:
            if f < 0.0:
                return -math.inf
            # point mass at 1/D: only all-uniform observations are compatible
            return math.inf if self._all_uniform else -math.inf
        if f > 1.0:
            return -math.inf
        t = self.terms(f)
        if np.isneginf(t).any():
            return -math.inf
        return math.fsum(t)

    def infeasible(self, fs: Iterable[float]) -> list[tuple[str, int, float]]:
        """Observations whose density vanishes at every f in ``fs``."""
        fs = [f for f in fs if 0.0 < f <= 1.0]
        if not fs:
            return []
        bad = None
        for f in fs:
            mask = np.isneginf(self.terms(f))
            bad = mask if bad is None else bad & mask
        out = []
        idx = 0
        for k, obs in self.observations.items():
            labels = self.labels.get(k) or [str(i) for i in range(obs.size)]
            for lab, x in zip(labels, obs):
                if bad[idx]:
                    out.append((lab, k, float(x)))
                idx += 1
        return out


class CountLikelihood:
    """Poisson count log-likelihood ``sum (n_k ln p_k(f) - S p_k(f))``."""

    method = Method.COUNT

    def __init__(self, counts: np.ndarray, shots: np.ndarray, ranks: Sequence[int], dims: Dims):
        # counts: (M, len(ranks)); shots: (M,)
        self.dims = dims
        self.ranks = np.asarray(ranks, dtype=np.int64)
        self.counts = np.atleast_2d(np.asarray(counts, dtype=np.float64))
        self.shots = np.asarray(shots, dtype=np.float64).reshape(-1, 1)
        means = rank_means(dims, int(self.ranks.max()))
        self._means = means[self.ranks - 1]
        self._u = 1.0 / dims.dim

    def _p(self, f):
        if f == 1.0:
            return self._means
        return self._u + f * (self._means - self._u)

    def terms(self, f: float) -> np.ndarray:
        p = self._p(float(f))
        with np.errstate(divide="ignore", invalid="ignore"):
            nlogp = np.where(self.counts > 0, self.counts * np.log(p), 0.0)
        return (nlogp - self.shots * p).ravel()

    def __call__(self, f: float) -> float:
        f = float(f)
        if not 0.0 <= f <= 1.0:
            return -math.inf
        t = self.terms(f)
        if np.isneginf(t).any():
            return -math.inf
        return math.fsum(t)


def _observations(records: Sequence[MeasurementRecord], ranks: Iterable[int]):
    obs, labels = {}, {}
    for k in ranks:
        obs[k] = np.array([r.counts[k - 1] / r.shots for r in records])
        labels[k] = [r.circuit_id for r in records]
    return obs, labels


def _check_records(records, sel: RankSelection):
    if not records:
        raise DomainError("no measurement records")
    for r in records:
        sel.check_available(r.n_ranks, f"record {r.circuit_id!r}")


def probability_likelihood(records: Sequence[MeasurementRecord], sel: RankSelection, dims: Dims,
                           form="auto", jacobian=JacobianMode.WITH_JACOBIAN) -> ProbabilityLikelihood:
    _check_records(records, sel)
    obs, labels = _observations(records, sel.ranks)
    return ProbabilityLikelihood(obs, dims, form=form, jacobian=jacobian, labels=labels)


def count_likelihood(records: Sequence[MeasurementRecord], sel: RankSelection, dims: Dims) -> CountLikelihood:
    _check_records(records, sel)
    idx = np.asarray(sel.ranks) - 1
    counts = np.array([[r.counts[i] for i in idx] for r in records], dtype=np.float64)
    shots = np.array([r.shots for r in records], dtype=np.float64)
    return CountLikelihood(counts, shots, sel.ranks, dims)


def log_likelihood_prob(records: Sequence[MeasurementRecord], sel: RankSelection, dims: Dims, f: float,
                        form="auto", jacobian=JacobianMode.WITH_JACOBIAN) -> float:
    """Probability-based log-likelihood at one fidelity value."""
    return probability_likelihood(records, sel, dims, form, jacobian)(f)


def log_likelihood_count(record, sel: RankSelection, dims: Dims, f: float) -> float:
    """Count-based (Poisson) log-likelihood at one fidelity value.

    ``record`` may be a single :class:`MeasurementRecord` or a sequence of them.
    """
    records = [record] if isinstance(record, MeasurementRecord) else list(record)
    return count_likelihood(records, sel, dims)(f)


# ---------------------------------------------------------------------------
# maximization


def _safe(fn: Callable[[float], float], x: float) -> float:
    v = fn(x)
    if v is None or math.isnan(v):
        return -math.inf
    return float(v)


def _golden(fn, a: float, b: float, xtol: float):
    c = b - _INV_PHI * (b - a)
    d = a + _INV_PHI * (b - a)
    fc, fd = _safe(fn, c), _safe(fn, d)
    while b - a > xtol:
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - _INV_PHI * (b - a)
            fc = _safe(fn, c)
        else:
            a, c, fc = c, d, fd
            d = a + _INV_PHI * (b - a)
            fd = _safe(fn, d)
    return (c, fc) if fc >= fd else (d, fd)


def _width(fn, x: float, fx: float, lo: float, hi: float) -> float:
    h = 1e-3
    w = math.nan
    for _ in range(6):
        h = min(h, x - lo, hi - x)
        if h < 1e-9:
            return math.nan
        fp, fm = _safe(fn, x + h), _safe(fn, x - h)
        curv = -(fp - 2.0 * fx + fm) / (h * h)
        if not math.isfinite(curv) or curv <= 0.0:
            return math.nan
        w = 1.0 / math.sqrt(curv)
        if h <= 0.1 * w:
            return w
        h = 0.05 * w
    return w


def maximize(curvefn: Callable[[float], float], *, grid: int = DEFAULT_GRID, lo: float = 0.0,
             hi: float = 1.0, xtol: float = DEFAULT_XTOL, method: Method | None = None) -> LikelihoodCurve:
    """Maximize ``curvefn`` over [lo, hi]: grid scan, then golden section.

    The grid locates the feasible region (the function may be ``-inf`` on
    sub-intervals); the best grid point (smallest f among near-ties) and its
    neighbours bracket the refinement.
    """
    if grid < 3:
        raise DomainError("grid needs at least 3 points")
    fs = np.linspace(lo, hi, grid)
    vals = np.array([_safe(curvefn, float(f)) for f in fs])
    if method is None:
        method = getattr(curvefn, "method", None)
    if not np.any(vals > -np.inf):
        raise EstimationFailed("log-likelihood is -inf at every grid point; no feasible fidelity")
    vmax = vals.max()
    if vmax == np.inf:
        i = int(np.argmax(vals == np.inf))
        f_hat, v_hat = float(fs[i]), math.inf
    else:
        i = int(np.argmax(vals >= vmax - TIE_TOL))
        a, b = float(fs[max(i - 1, 0)]), float(fs[min(i + 1, grid - 1)])
        f_hat, v_hat = _golden(curvefn, a, b, xtol)
        if not v_hat >= vals[i]:
            f_hat, v_hat = float(fs[i]), float(vals[i])
    edge = 10.0 * xtol
    at_boundary = f_hat - lo <= edge or hi - f_hat <= edge
    if at_boundary and math.isfinite(v_hat):
        j = 0 if f_hat - lo <= edge else grid - 1
        if vals[j] >= v_hat - TIE_TOL:
            f_hat, v_hat = float(fs[j]), float(vals[j])
    if at_boundary or not math.isfinite(v_hat):
        width = math.nan
    else:
        width = _width(curvefn, f_hat, v_hat, lo, hi)
    return LikelihoodCurve(fs, vals, f_hat, width, method, at_boundary, v_hat)


# ---------------------------------------------------------------------------
# estimators


def _build(records, sel, dims, method, form, jacobian):
    method = Method(method)
    if method is Method.PROB:
        return probability_likelihood(records, sel, dims, form, jacobian)
    return count_likelihood(records, sel, dims)


def _run(lik, records_ids, sel, method, grid, jacobian) -> EstimationResult:
    try:
        curve = maximize(lik, grid=grid, method=Method(method))
    except EstimationFailed as exc:
        if isinstance(lik, ProbabilityLikelihood):
            bad = lik.infeasible(np.linspace(0.0, 1.0, grid))
            shown = ", ".join(f"{c} rank {k} p={x:.6g}" for c, k, x in bad[:10])
            more = f" (+{len(bad) - 10} more)" if len(bad) > 10 else ""
            raise EstimationFailed(f"{exc}; observations outside every deformed support: {shown}{more}") from None
        raise
    return EstimationResult(
        f_hat=curve.f_hat,
        width=curve.width,
        method=Method(method),
        ranks_used=sel,
        circuits_used=tuple(records_ids),
        jacobian_mode=JacobianMode.parse(jacobian),
        at_boundary=curve.at_boundary,
        form=getattr(lik, "form", None),
        curve=curve,
    )


def estimate(records: Sequence[MeasurementRecord], sel: RankSelection, dims: Dims, method="prob", *,
             form="auto", jacobian=JacobianMode.WITH_JACOBIAN, grid: int = DEFAULT_GRID) -> EstimationResult:
    """Pool all selected ranks of all records into one likelihood."""
    lik = _build(records, sel, dims, method, form, jacobian)
    return _run(lik, [r.circuit_id for r in records], sel, method, grid, jacobian)


def estimate_fixed_rank(records: Sequence[MeasurementRecord], k: int, dims: Dims, method="prob", *,
                        form="auto", jacobian=JacobianMode.WITH_JACOBIAN,
                        grid: int = DEFAULT_GRID) -> EstimationResult:
    """Combine likelihoods across circuit realizations at a single rank."""
    return estimate(records, RankSelection((k,)), dims, method, form=form, jacobian=jacobian, grid=grid)


def estimate_single_circuit(record: MeasurementRecord, sel: RankSelection, dims: Dims, method="prob", *,
                            form="auto", jacobian=JacobianMode.WITH_JACOBIAN,
                            grid: int = DEFAULT_GRID) -> EstimationResult:
    """Combine likelihoods across the selected ranks of one circuit."""
    return estimate([record], sel, dims, method, form=form, jacobian=jacobian, grid=grid)


def estimate_from_probabilities(probs, sel: RankSelection, dims: Dims, *, form="auto",
                                jacobian=JacobianMode.WITH_JACOBIAN, grid: int = DEFAULT_GRID,
                                labels: Sequence[str] | None = None) -> EstimationResult:
    """Probability-MLE on exact (shot-noise free) ranked probabilities.

    ``probs`` has shape (M, K): one descending row per realization.
    """
    arr = np.atleast_2d(np.asarray(probs, dtype=np.float64))
    sel.check_available(arr.shape[1], "probability rows")
    ids = list(labels) if labels is not None else [str(i) for i in range(arr.shape[0])]
    obs = {k: arr[:, k - 1] for k in sel.ranks}
    lik = ProbabilityLikelihood(obs, dims, form=form, jacobian=jacobian, labels={k: ids for k in sel.ranks})
    return _run(lik, ids, sel, Method.PROB, grid, jacobian)
