from photon_detector.solvers.ensemble import (
    EnsembleJob,
    iter_ensemble_chunks,
    run_ensemble,
    simulate_one,
)
from photon_detector.solvers.grid import (
    ExpectationTraces,
    TimeGrid,
    TrajectoryRecord,
    bin_means,
)
from photon_detector.solvers.master import lindblad_rhs, solve_master
from photon_detector.solvers.stochastic import (
    SolverChoice,
    derive_seed,
    solve_sme_pure,
    solve_sme_trajectory,
)

__all__ = [
    "EnsembleJob",
    "ExpectationTraces",
    "SolverChoice",
    "TimeGrid",
    "TrajectoryRecord",
    "bin_means",
    "derive_seed",
    "iter_ensemble_chunks",
    "lindblad_rhs",
    "run_ensemble",
    "simulate_one",
    "solve_master",
    "solve_sme_pure",
    "solve_sme_trajectory",
]
