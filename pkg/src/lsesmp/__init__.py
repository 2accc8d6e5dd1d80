"""Sparse beamspace channel estimation toolkit.

Iterative least-squares + message-passing estimator for Bernoulli-
Gaussian sparse channels, classical baselines, covariance lower bounds,
a density-evolution (EXIT chart) analyzer and a reproducible Monte-Carlo
sweep harness with a CLI.
"""
from .bounds import CrlbReport, crlb_lse, crlb_lse_smp, score_identity_check
from .channel import (
    GeometricParams,
    ProblemInstance,
    SparseChannelSpec,
    SystemDims,
    bernoulli_gaussian_channel,
    build_training,
    complex_to_real_stack,
    dft_matrix,
    geometric_channel,
    observe,
    to_beamspace,
    ula_response,
)
from .estimator import (
    EstimateResult,
    EstimatorConfig,
    SmpState,
    genie_ls,
    lse_baseline,
    lse_coarse,
    lse_fine,
    nmse,
    omp_baseline,
    run_lse_smp,
)
from .exit_chart import (
    ExitParams,
    ExitTrajectory,
    ber_predict,
    exit_fixed_points,
    exit_trajectory,
    exit_update,
    exit_zeta,
)
from .harness import (
    SweepConfig,
    SweepRecord,
    load_config,
    make_instance,
    run_exit,
    run_sweep,
)
from .numerics import (
    RandomStream,
    gaussian_logpdf,
    kron,
    pseudo_inverse,
    stream_for_trial,
)

__version__ = "0.1.0"
