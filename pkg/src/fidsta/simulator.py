"""Synthetic data and the validation experiments.

Random streams are counter-based: every trial draws from a Philox generator
keyed by ``(seed, stream..., trial)``, so results are independent of thread
count and scheduling. Aggregates are reduced in trial order.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Callable, Sequence

import numpy as np

from . import kernels
from .errors import ConfigError, DomainError, UnattainableThresholdError
from .estimator import (
    CountLikelihood,
    JacobianMode,
    MeasurementRecord,
    RankSelection,
    estimate_from_probabilities,
    maximize,
)
from .noise import NoiseModel, apply_noise
from .orderstat import Dims, rank_means

log = logging.getLogger(__name__)

CHUNK = 1 << 16
FULL_VECTOR_MAX_DIM = 1 << 20
STREAMING_MAX_DIM = 1 << 34


class SampleMode(str, Enum):
    FULL_VECTOR = "full"
    STREAMING_TOP_K = "streaming"
    ANALYTIC_RANK = "analytic"


class CountLaw(str, Enum):
    POISSON = "poisson"
    BINOMIAL = "binomial"


class Statistic(str, Enum):
    MEAN = "mean"
    MEDIAN = "median"


def stream(seed: int, *key: int) -> np.random.Generator:
    """Independent, reproducible generator for the counter ``key``."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True, eq=False)
class HaarSample:
    dims: Dims
    top_probs: np.ndarray
    mode: SampleMode
    full_probs: np.ndarray | None = field(default=None, repr=False)


def _add_compensated(state: list[float], value: float):
    s, c = state
    t = s + value
    if abs(s) >= abs(value):
        c += (s - t) + value
    else:
        c += (value - t) + s
    state[0], state[1] = t, c


def _exponential_chunks(D: int, rng: np.random.Generator):
    remaining = D
    while remaining > 0:
        n = min(CHUNK, remaining)
        yield rng.standard_exponential(n)
        remaining -= n


def sample_haar(dims: Dims, K: int, mode=SampleMode.FULL_VECTOR, rng: np.random.Generator | None = None,
                keep_full: bool = False) -> HaarSample:
    """Top-K output probabilities of a Haar-random state, descending.

    Probabilities are normalized unit-rate exponentials. The total is
    accumulated chunk by chunk (exact chunk sums, compensated across chunks)
    in both sampling modes, so full-vector and streaming runs fed the same
    stream return identical values.
    """
    mode = SampleMode(mode)
    D = dims.dim
    K = int(K)
    if not 1 <= K <= D:
        raise DomainError(f"K={K} outside [1, D={D}]")
    if mode is SampleMode.ANALYTIC_RANK:
        return HaarSample(dims, rank_means(dims, K), mode)
    if rng is None:
        raise DomainError("random sampling modes need a generator")
    total = [0.0, 0.0]
    if mode is SampleMode.FULL_VECTOR:
        if D > FULL_VECTOR_MAX_DIM:
            raise DomainError(f"full-vector sampling is limited to D <= 2**20 (got N={dims.n_qubits})")
        chunks = []
        for chunk in _exponential_chunks(D, rng):
            _add_compensated(total, math.fsum(chunk))
            chunks.append(chunk)
        e = np.concatenate(chunks)
        s = total[0] + total[1]
        top = np.sort(np.partition(e, D - K)[D - K:])[::-1] / s
        full = np.sort(e)[::-1] / s if keep_full else None
        return HaarSample(dims, top, mode, full)
    if D > STREAMING_MAX_DIM:
        raise DomainError(f"streaming sampling is limited to D <= 2**34 (got N={dims.n_qubits})")
    heap = np.empty(K)
    size = 0
    for chunk in _exponential_chunks(D, rng):
        _add_compensated(total, math.fsum(chunk))
        size = kernels.topk_update(heap, size, chunk)
    s = total[0] + total[1]
    return HaarSample(dims, np.sort(heap[:size])[::-1] / s, mode)


BATCH_MAX_ELEMENTS = 1 << 24


def sample_haar_batch(dims: Dims, K: int, M: int, rng: np.random.Generator) -> np.ndarray:
    """``(M, K)`` array of descending top-K probabilities for M independent small states."""
    D, K, M = dims.dim, int(K), int(M)
    if not 1 <= K <= D:
        raise DomainError(f"K={K} outside [1, D={D}]")
    rows = max(1, BATCH_MAX_ELEMENTS // D)
    out = np.empty((M, K))
    for start in range(0, M, rows):
        e = rng.standard_exponential((min(rows, M - start), D))
        top = -np.sort(-e, axis=1)[:, :K]
        out[start:start + e.shape[0]] = top / e.sum(axis=1, keepdims=True)
    return out


def default_sample_mode(dims: Dims) -> SampleMode:
    if dims.dim <= FULL_VECTOR_MAX_DIM:
        return SampleMode.FULL_VECTOR
    if dims.dim <= STREAMING_MAX_DIM:
        return SampleMode.STREAMING_TOP_K
    return SampleMode.ANALYTIC_RANK


def sample_counts(probs, noise: NoiseModel, shots: int, law=CountLaw.POISSON,
                  rng: np.random.Generator | None = None, dims: Dims | None = None) -> np.ndarray:
    """Independent per-rank counts with mean ``shots * p_k(f)``.

    ``dims`` is required: the uniform level 1/D cannot be inferred from a
    top-K slice.
    """
    if rng is None:
        raise DomainError("sample_counts needs a generator")
    if dims is None:
        raise DomainError("sample_counts needs the system dimensions")
    shots = int(shots)
    if shots < 1:
        raise DomainError("shots must be >= 1")
    p = np.atleast_1d(apply_noise(np.asarray(probs, dtype=np.float64), noise, dims))
    if CountLaw(law) is CountLaw.POISSON:
        return rng.poisson(shots * p).astype(np.int64)
    return rng.binomial(shots, np.clip(p, 0.0, 1.0)).astype(np.int64)


def rerank_order(counts) -> np.ndarray:
    """Permutation sorting ``counts`` descending; equal counts keep their input order."""
    return np.argsort(-np.asarray(counts), kind="stable")


def rerank(counts) -> np.ndarray:
    """Counts sorted descending; equal counts keep their input order."""
    arr = np.asarray(counts)
    return arr[rerank_order(arr)]


def synthesize_record(dims: Dims, fidelity: float, shots: int, top_k: int, rng: np.random.Generator, *,
                      law=CountLaw.BINOMIAL, circuit_id: str = "synthetic") -> MeasurementRecord:
    """A realistic top-K record: Haar state, noise, shots on every outcome, rerank."""
    sample = sample_haar(dims, dims.dim, SampleMode.FULL_VECTOR, rng)
    counts = rerank(sample_counts(sample.top_probs, NoiseModel(fidelity), shots, law, rng, dims))
    top = counts[:top_k]
    return MeasurementRecord(circuit_id, shots, tuple(int(c) for c in top), truncated=top.size < top_k)


# ---------------------------------------------------------------------------
# count-MLE shot experiments


@dataclass(frozen=True)
class SimConfig:
    dims: Dims
    true_fidelity: float
    shots: int
    top_k: int = 500
    trials: int = 100
    seed: int = 0
    eps_rel: float = 0.1
    statistic: Statistic = Statistic.MEAN
    law: CountLaw = CountLaw.POISSON
    rerank: bool = True
    grid: int = 200

    def __post_init__(self):
        if not 0.0 <= self.true_fidelity <= 1.0:
            raise ConfigError("true_fidelity must lie in [0, 1]")
        for name in ("shots", "top_k", "trials"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"{name} must be positive")
        if self.eps_rel <= 0.0:
            raise ConfigError("eps_rel must be positive")
        if self.top_k > self.dims.dim:
            raise ConfigError("top_k exceeds the Hilbert dimension")
        object.__setattr__(self, "statistic", Statistic(self.statistic))
        object.__setattr__(self, "law", CountLaw(self.law))


def run_trial(cfg: SimConfig, rng: np.random.Generator) -> float:
    """One synthetic count-MLE estimate: analytic rank means, noisy counts, rerank, fit."""
    probs = rank_means(cfg.dims, cfg.top_k)
    counts = sample_counts(probs, NoiseModel(cfg.true_fidelity), cfg.shots, cfg.law, rng, cfg.dims)
    if cfg.rerank:
        counts = rerank(counts)
    lik = CountLikelihood(counts[None, :], np.array([cfg.shots]), np.arange(1, cfg.top_k + 1), cfg.dims)
    return maximize(lik, grid=cfg.grid).f_hat


def _map_ordered(fn: Callable[[int], float], n: int, threads: int) -> np.ndarray:
    if threads <= 1:
        return np.array([fn(i) for i in range(n)])
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return np.array(list(pool.map(fn, range(n))))


def run_trials(cfg: SimConfig, *, probe: int = 0, threads: int = 1) -> np.ndarray:
    """Estimates for trials ``0..cfg.trials-1``, trial i drawing from ``stream(seed, probe, i)``."""
    return _map_ordered(lambda i: run_trial(cfg, stream(cfg.seed, probe, i)), cfg.trials, threads)


def relative_error_statistic(estimates: np.ndarray, truth: float, statistic=Statistic.MEAN) -> float:
    rel = np.abs(np.asarray(estimates) - truth) / truth
    if Statistic(statistic) is Statistic.MEDIAN:
        return float(np.median(rel))
    return math.fsum(rel) / rel.size


@dataclass(frozen=True)
class Probe:
    shots: int
    statistic: float
    success: bool


@dataclass(frozen=True)
class MinShotsResult:
    shots: int
    config: SimConfig
    probes: tuple[Probe, ...]

    def to_dict(self) -> dict:
        c = self.config
        return {
            "min_shots": self.shots,
            "n_qubits": c.dims.n_qubits,
            "fidelity": c.true_fidelity,
            "eps_rel": c.eps_rel,
            "top_k": c.top_k,
            "trials": c.trials,
            "seed": c.seed,
            "statistic": c.statistic.value,
            "law": c.law.value,
            "rerank": c.rerank,
            "reference_shots": c.dims.dim / c.dims.n_qubits,
            "probes": [{"shots": p.shots, "statistic": p.statistic, "success": p.success} for p in self.probes],
        }


def min_shots_bisection(cfg: SimConfig, s_lo: int | None = None, s_hi: int | None = None, *,
                        threads: int = 1, ceiling: int | None = None, ratio: float = 1.1) -> MinShotsResult:
    """Smallest shot count whose trial statistic meets ``cfg.eps_rel``.

    The upper end is doubled until it succeeds (up to ``ceiling``, default
    2**(N+4)); the bracket is then bisected geometrically until
    ``s_hi / s_lo <= ratio``. Each probe draws fresh streams keyed by the
    probe counter.
    """
    N, D = cfg.dims.n_qubits, cfg.dims.dim
    ceiling = 2 ** (N + 4) if ceiling is None else int(ceiling)
    s_hi = max(2, D // N) if s_hi is None else int(s_hi)
    s_lo = max(1, s_hi // 64) if s_lo is None else int(s_lo)
    if not 1 <= s_lo < s_hi:
        raise ConfigError("need 1 <= s_lo < s_hi")
    probes: list[Probe] = []

    def ok(S: int) -> bool:
        est = run_trials(replace(cfg, shots=S), probe=len(probes), threads=threads)
        stat = relative_error_statistic(est, cfg.true_fidelity, cfg.statistic)
        probes.append(Probe(S, stat, stat <= cfg.eps_rel))
        log.info("probe S=%d statistic=%.4g success=%s", S, stat, stat <= cfg.eps_rel)
        return stat <= cfg.eps_rel

    while not ok(s_hi):
        s_lo = s_hi
        s_hi *= 2
        if s_hi > ceiling:
            raise UnattainableThresholdError(
                f"eps_rel={cfg.eps_rel} not reached with up to {s_lo} shots (ceiling {ceiling})"
            )
    while ok(s_lo):
        s_hi = s_lo
        if s_lo == 1:
            return MinShotsResult(1, cfg, tuple(probes))
        s_lo = max(1, s_lo // 2)
    while s_hi / s_lo > ratio:
        mid = int(round(math.sqrt(s_lo * s_hi)))
        if mid <= s_lo or mid >= s_hi:
            break
        if ok(mid):
            s_hi = mid
        else:
            s_lo = mid
    return MinShotsResult(s_hi, cfg, tuple(probes))


# ---------------------------------------------------------------------------
# probability-MLE error scaling


@dataclass(frozen=True)
class ScalingRow:
    n_qubits: int
    ranks: RankSelection
    mean_error: float
    std_error: float
    sem: float
    bias: float
    estimates: tuple[float, ...]


def _scaling_realization(dims: Dims, fidelity: float, rank_sets: Sequence[RankSelection], rng,
                         form, jacobian, shots: int | None) -> list[float]:
    K = max(s.max_rank for s in rank_sets)
    sample = sample_haar(dims, K, default_sample_mode(dims), rng)
    noise = NoiseModel(fidelity)
    if shots is None:
        probs = apply_noise(sample.top_probs, noise, dims)
    else:
        probs = rerank(sample_counts(sample.top_probs, noise, shots, CountLaw.POISSON, rng, dims)) / shots
    return [estimate_from_probabilities(probs[None, :], sel, dims, form=form, jacobian=jacobian).f_hat
            for sel in rank_sets]


def error_scaling_experiment(n_values: Sequence[int], fidelity: float, rank_sets: Sequence[RankSelection],
                             trials: int = 10, *, seed: int = 0, threads: int = 1, form="auto",
                             jacobian=JacobianMode.WITH_JACOBIAN, shots: int | None = None) -> list[ScalingRow]:
    """Per-realization probability-MLE error versus system size.

    Each realization is one Haar state at fidelity ``fidelity``; every rank
    set is fitted on the same states. Without ``shots`` the exact noisy
    probabilities are used.
    """
    if trials < 1:
        raise ConfigError("trials must be positive")
    rows = []
    for n in n_values:
        dims = Dims(int(n))
        fits = _map_ordered(
            lambda m: _scaling_realization(dims, fidelity, rank_sets, stream(seed, n, m), form, jacobian, shots),
            trials, threads,
        ).reshape(trials, len(rank_sets))
        for j, sel in enumerate(rank_sets):
            est = fits[:, j]
            err = np.abs(est - fidelity)
            std = float(np.std(est, ddof=1)) if trials > 1 else 0.0
            rows.append(ScalingRow(
                n_qubits=dims.n_qubits,
                ranks=sel,
                mean_error=math.fsum(err) / trials,
                std_error=std,
                sem=std / math.sqrt(trials),
                bias=abs(math.fsum(est) / trials - fidelity),
                estimates=tuple(float(e) for e in est),
            ))
    return rows


def fit_inverse_n(rows: Sequence[ScalingRow]) -> tuple[float, np.ndarray]:
    """Least-squares ``C`` for ``mean_error ~ C / N``; returns C and relative residuals."""
    n = np.array([r.n_qubits for r in rows], dtype=np.float64)
    e = np.array([r.mean_error for r in rows])
    C = float(np.sum(e / n) / np.sum(1.0 / n**2))
    fitted = C / n
    return C, np.abs(e - fitted) / fitted
