"""Repeated weak measurements on a single quantum system, without post-selection.

Simulation engine (:mod:`weakmeas.trajectories`), exact single-step operations
(:mod:`weakmeas.core`), closed-form ensemble predictions
(:mod:`weakmeas.analytics`) and a command line front end (``weakmeas``).
"""

from .analytics import (
    AverageDistribution,
    DisturbancePoint,
    average_distribution,
    disturbance,
    disturbance_curve,
    disturbance_strong_limit,
    ensemble_mean,
    expected_reduced_density_after_M,
    outcome_variance,
    required_weak_repetitions,
    saturation_ratio,
    single_step_reduced_density,
    spectral_spread,
    statistical_error,
)
from .core import (
    ApparatusConfig,
    DensityMatrix,
    OutcomeSequence,
    PureState,
    Spectrum,
    collapse,
    density_from_pure,
    joint_density,
    log_joint_density,
    make_state,
    outcome_density,
    overlap_trace,
    povm_completeness_residual,
    povm_element,
    purity,
    sample_outcome,
    state_after_sequence,
    strong_sample,
)
from .trajectories import (
    EnsembleStats,
    TerminalFrequencies,
    TrajectoryRecord,
    default_bin_edges,
    empirical_vs_analytic,
    run_ensemble,
    run_trajectory,
    terminal_frequencies,
    trajectory_stream,
)

__version__ = "0.1.0"

__all__ = [
    "ApparatusConfig",
    "AverageDistribution",
    "DensityMatrix",
    "DisturbancePoint",
    "EnsembleStats",
    "OutcomeSequence",
    "PureState",
    "Spectrum",
    "TerminalFrequencies",
    "TrajectoryRecord",
    "average_distribution",
    "collapse",
    "default_bin_edges",
    "density_from_pure",
    "disturbance",
    "disturbance_curve",
    "disturbance_strong_limit",
    "empirical_vs_analytic",
    "ensemble_mean",
    "expected_reduced_density_after_M",
    "joint_density",
    "log_joint_density",
    "make_state",
    "outcome_density",
    "outcome_variance",
    "overlap_trace",
    "povm_completeness_residual",
    "povm_element",
    "purity",
    "required_weak_repetitions",
    "run_ensemble",
    "run_trajectory",
    "sample_outcome",
    "saturation_ratio",
    "single_step_reduced_density",
    "spectral_spread",
    "state_after_sequence",
    "statistical_error",
    "strong_sample",
    "terminal_frequencies",
    "trajectory_stream",
    "__version__",
]
