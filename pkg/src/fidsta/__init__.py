"""Simulation-free fidelity estimation from the order statistics of Haar-random outputs."""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    ConfigError,
    DegenerateChannelError,
    DomainError,
    EstimationFailed,
    ExactModeCeilingError,
    FidstaError,
    ParseCode,
    ParseError,
    UnattainableThresholdError,
)
from .kernels import BACKEND  # noqa: E402
from .orderstat import (  # noqa: E402
    Dims,
    Form,
    MomentSet,
    RankPdf,
    approx_pdf,
    digamma_mean,
    exact_pdf,
    pt_pdf,
    rank_means,
    rank_pdf,
    second_moment,
)
from .noise import (  # noqa: E402
    DeformedRankPdf,
    JacobianMode,
    NoiseModel,
    apply_noise,
    deformed_pdf,
    noisy_mean,
)
from .estimator import (  # noqa: E402
    EstimationResult,
    LikelihoodCurve,
    MeasurementRecord,
    Method,
    RankSelection,
    estimate,
    estimate_fixed_rank,
    estimate_from_probabilities,
    estimate_single_circuit,
    log_likelihood_count,
    log_likelihood_prob,
    maximize,
)
from .simulator import (  # noqa: E402
    HaarSample,
    SampleMode,
    SimConfig,
    error_scaling_experiment,
    min_shots_bisection,
    rerank,
    run_trial,
    run_trials,
    sample_counts,
    sample_haar,
    stream,
)
