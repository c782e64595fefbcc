"""Simulation engine for a continuous, QND itinerant-photon detector."""

from photon_detector.detection import (
    CrossingHistogram,
    DetectionResult,
    MatchedFilter,
    build_filter,
    crossing_histogram,
    detect,
    detect_batch,
    filter_signal,
    photon_waveform,
)
from photon_detector.hilbert import (
    HilbertSpace,
    Operator,
    QuantumState,
    SubsystemSpec,
    annihilation,
    basis_state,
    embed,
    expectation,
    quadratures,
)
from photon_detector.metrics import (
    DarkCountEstimate,
    DarkCountMethod,
    MetricsSummary,
    RocPoint,
    choose_window,
    dark_count_empirical,
    dark_count_gaussian_estimate,
    efficiency,
    fidelity,
    roc_curve,
    summarize,
)
from photon_detector.model import (
    CollapseChannel,
    DetectorConfig,
    DispersiveParams,
    SystemModel,
    Truncation,
    Variant,
    build_dispersive,
    build_ensemble,
    build_model,
    build_single_absorber,
    initial_state,
)
from photon_detector.optimizer import (
    OptimizationProblem,
    OptimizationResult,
    optimize,
    surrogate_objective,
    trap_time,
)
from photon_detector.solvers import (
    ExpectationTraces,
    SolverChoice,
    TimeGrid,
    TrajectoryRecord,
    lindblad_rhs,
    run_ensemble,
    solve_master,
    solve_sme_pure,
    solve_sme_trajectory,
)

__version__ = "0.1.0"
