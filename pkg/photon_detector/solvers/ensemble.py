"""
Parallel ensemble runner.

Trajectory k always uses derive_seed(base_seed, k), so the output depends only on
(model, grid, base_seed) and never on worker count or scheduling. Indices are
processed in logical chunks; each worker process receives the shared model once
through the pool initializer.
"""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Iterator, List, Sequence

from photon_detector.hilbert import QuantumState
from photon_detector.model import SystemModel, initial_state
from photon_detector.solvers.grid import TimeGrid, TrajectoryRecord
from photon_detector.solvers.stochastic import (
    SolverChoice,
    derive_seed,
    solve_sme_pure,
    solve_sme_trajectory,
)
from photon_detector.utils.performance_logger import get_tracker

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class EnsembleJob:
    """Everything a worker needs besides the trajectory index."""

    model: SystemModel
    grid: TimeGrid
    base_seed: int
    solver: SolverChoice = SolverChoice.AUTO
    state0: QuantumState | None = None
    observables: Sequence[str] = field(default_factory=tuple)
    state_tolerance: float = 1e-6
    validity_check_stride: int = 500
    truncation_tolerance: float = 1e-6

    def resolved_solver(self) -> SolverChoice:
        if self.solver is not SolverChoice.AUTO:
            return self.solver
        pure_ok = self.model.eta_h >= 1.0 and (self.state0 is None or self.state0.is_pure)
        return SolverChoice.PURE if pure_ok else SolverChoice.MIXED


# Set once per worker process by the pool initializer.
_JOB: EnsembleJob | None = None


def _init_worker(job: EnsembleJob) -> None:
    global _JOB
    _JOB = job


def simulate_one(job: EnsembleJob, index: int) -> TrajectoryRecord:
    """Run trajectory `index`; failures come back as an error record."""
    seed = derive_seed(job.base_seed, index)
    state0 = job.state0 or initial_state(job.model.config, job.model.space)
    solve = solve_sme_pure if job.resolved_solver() is SolverChoice.PURE else solve_sme_trajectory
    try:
        return solve(
            job.model,
            state0,
            job.grid,
            seed,
            observables=tuple(job.observables),
            index=index,
            state_tolerance=job.state_tolerance,
            validity_check_stride=job.validity_check_stride,
            truncation_tolerance=job.truncation_tolerance,
        )
    except Exception as e:
        logger.exception("Trajectory %d (seed %d) failed", index, seed)
        return TrajectoryRecord(index=index, seed=seed, status="error", error=str(e))


def _run_chunk(indices: Sequence[int]) -> List[TrajectoryRecord]:
    assert _JOB is not None, "worker not initialized"
    return [simulate_one(_JOB, i) for i in indices]


def _chunked(sequence, size: int):
    """
    Yield successive chunks from the given sequence.
    Keeps the overall ordering; size <= 0 means one chunk.
    """
    if size <= 0:
        yield sequence
        return

    for i in range(0, len(sequence), size):
        yield sequence[i : i + size]


def iter_ensemble_chunks(
    job: EnsembleJob,
    n_traj: int,
    max_workers: int = 1,
    chunk_size: int = 50,
) -> Iterator[List[TrajectoryRecord]]:
    """Yield records chunk by chunk, in index order."""
    if n_traj < 1:
        raise ValueError(f"n_traj must be >= 1, got {n_traj}")
    # config-level problems must surface here, not as n_traj error records
    job.grid.check_stability(job.model.max_rate)
    chunks = list(_chunked(list(range(n_traj)), chunk_size))
    logger.info(
        "Ensemble: %d trajectories, %d chunks, %d worker(s), solver=%s",
        n_traj,
        len(chunks),
        max_workers,
        job.resolved_solver().value,
    )
    if max_workers <= 1:
        for chunk in chunks:
            yield [simulate_one(job, i) for i in chunk]
        return

    with ProcessPoolExecutor(
        max_workers=max_workers,
        initializer=_init_worker,
        initargs=(job,),
    ) as pool:
        # map preserves submission order
        for records in pool.map(_run_chunk, chunks):
            yield records


def run_ensemble(
    model: SystemModel,
    grid: TimeGrid,
    n_traj: int,
    base_seed: int,
    solver_choice: SolverChoice = SolverChoice.AUTO,
    state0: QuantumState | None = None,
    observables: Sequence[str] = (),
    max_workers: int = 1,
    chunk_size: int = 50,
    state_tolerance: float = 1e-6,
    validity_check_stride: int = 500,
    truncation_tolerance: float = 1e-6,
) -> List[TrajectoryRecord]:
    """Run `n_traj` independent trajectories and return them in index order."""
    job = EnsembleJob(
        model=model,
        grid=grid,
        base_seed=base_seed,
        solver=solver_choice,
        state0=state0,
        observables=tuple(observables),
        state_tolerance=state_tolerance,
        validity_check_stride=validity_check_stride,
        truncation_tolerance=truncation_tolerance,
    )
    label = f"ensemble[N={model.config.n_absorbers}, photon={model.config.with_photon}]"
    records: List[TrajectoryRecord] = []
    with get_tracker().measure(label, items=n_traj):
        for chunk in iter_ensemble_chunks(job, n_traj, max_workers, chunk_size):
            records.extend(chunk)
    n_failed = sum(not r.ok for r in records)
    if n_failed:
        logger.warning("%d of %d trajectories failed", n_failed, n_traj)
    return records
