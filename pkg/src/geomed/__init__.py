"""Streaming geometric-median estimation in weighted coordinate spaces.

A stochastic-gradient recursion and its running average estimate the
geometric median from a stream of draws; an offline fixed-point solver
provides the exact answer on finite point sets; diagnostics reconstruct the
error decomposition exactly on empirical distributions; and a Monte Carlo
harness verifies the estimators' convergence rates.
"""

from .diagnostics import (
    BoundReport,
    DiagnosticsRecord,
    abel_identity_residual,
    bound_report,
    c1_hat,
    diagnostics_report,
    hessian_empirical,
    operator_spectrum,
    phi_empirical,
    xi_delta,
)
from .estimators import (
    EstimatorState,
    StepSchedule,
    Trajectory,
    WeiszfeldResult,
    initial_state,
    objective_empirical,
    rm_step,
    run_stream,
    weiszfeld,
)
from .experiments import (
    DistanceTable,
    EnvelopeReport,
    ExperimentConfig,
    MomentCurve,
    OracleComparison,
    RateFit,
    RobustnessReport,
    as_envelope,
    averaged_as_check,
    compare_to_oracle,
    fit_rate,
    log_checkpoints,
    mean_vs_median_report,
    run_replications,
    simulate_distances,
)
from .sources import (
    AssumptionReport,
    Contaminated,
    DatasetError,
    EllipticalStudent,
    Empirical,
    FunctionalBridge,
    SampleSource,
    SphericalGaussian,
    assumption_check,
    load_dataset,
    mix_seed,
    save_dataset,
)
from .space import SpaceSpec, as_point, combine, inner, norm

__version__ = "0.1.0"
