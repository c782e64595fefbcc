import numpy as np
import pytest
from numpy.testing import assert_array_equal

from photon_detector.hilbert import QuantumState
from photon_detector.model import DetectorConfig, Truncation, build_model, initial_state
from photon_detector.solvers.ensemble import EnsembleJob, _chunked, iter_ensemble_chunks, run_ensemble, simulate_one
from photon_detector.solvers.grid import TimeGrid
from photon_detector.solvers.master import solve_master
from photon_detector.solvers.stochastic import SolverChoice, derive_seed

GRID = TimeGrid(t_end=5.0, dt=0.01, record_stride=5)


def test_chunked_keeps_order():
    assert list(_chunked(list(range(7)), 3)) == [[0, 1, 2], [3, 4, 5], [6]]
    assert list(_chunked([1, 2], 0)) == [[1, 2]]


def test_records_in_index_order(single_cfg):
    model = build_model(single_cfg)
    records = run_ensemble(model, GRID, n_traj=5, base_seed=11, chunk_size=2)
    assert [r.index for r in records] == list(range(5))
    assert [r.seed for r in records] == [derive_seed(11, k) for k in range(5)]
    assert all(r.ok for r in records)


def test_worker_count_does_not_change_results(single_cfg):
    model = build_model(single_cfg)
    serial = run_ensemble(model, GRID, n_traj=6, base_seed=3, max_workers=1, chunk_size=4)
    parallel = run_ensemble(model, GRID, n_traj=6, base_seed=3, max_workers=2, chunk_size=2)
    for a, b in zip(serial, parallel):
        assert_array_equal(a.J, b.J)


def test_chunk_size_does_not_change_results(single_cfg):
    model = build_model(single_cfg)
    job = EnsembleJob(model=model, grid=GRID, base_seed=5)
    a = [r for chunk in iter_ensemble_chunks(job, 4, chunk_size=1) for r in chunk]
    b = [r for chunk in iter_ensemble_chunks(job, 4, chunk_size=3) for r in chunk]
    for x, y in zip(a, b):
        assert_array_equal(x.J, y.J)


def test_failed_trajectory_becomes_error_record(single_cfg):
    model = build_model(single_cfg)
    d = model.space.total_dim
    rho = np.zeros((d, d), dtype=complex)
    rho[0, 0], rho[1, 1] = 1.5, -0.5
    job = EnsembleJob(
        model=model,
        grid=GRID,
        base_seed=0,
        solver=SolverChoice.MIXED,
        state0=QuantumState.mixed(rho),
        validity_check_stride=1,
    )
    rec = simulate_one(job, 2)
    assert rec.status == "error"
    assert not rec.ok
    assert "eigenvalue" in rec.error
    assert rec.seed == derive_seed(0, 2)


def test_solver_resolution(single_cfg):
    model = build_model(single_cfg)
    assert EnsembleJob(model=model, grid=GRID, base_seed=0).resolved_solver() is SolverChoice.PURE
    lossy = build_model(single_cfg.model_copy(update={"eta_h": 0.8}))
    assert EnsembleJob(model=lossy, grid=GRID, base_seed=0).resolved_solver() is SolverChoice.MIXED
    forced = EnsembleJob(model=model, grid=GRID, base_seed=0, solver=SolverChoice.MIXED)
    assert forced.resolved_solver() is SolverChoice.MIXED


def test_invalid_ensemble_size(single_cfg):
    with pytest.raises(ValueError):
        run_ensemble(build_model(single_cfg), GRID, n_traj=0, base_seed=0)


@pytest.mark.slow
def test_trajectory_average_matches_master_equation():
    cfg = DetectorConfig(n_absorbers=1, kappa_A=0.2, kappa_B=1.0, kappa_C=0.1, g_z=1.0, truncation=Truncation(dim_A=15))
    model = build_model(cfg)
    grid = TimeGrid(t_end=60.0, dt=0.005, record_stride=20)
    me = solve_master(model, initial_state(cfg, model.space), grid, observables=("Y_A",))
    records = run_ensemble(model, grid, n_traj=2000, base_seed=2024, observables=("Y_A",))
    y = np.vstack([r.traces["Y_A"] for r in records if r.ok])
    sem = y.std(axis=0, ddof=1) / np.sqrt(y.shape[0])
    inside = np.abs(y.mean(axis=0) - me["Y_A"]) <= 3 * sem + 1e-6
    assert inside.mean() >= 0.98
