"""
Homodyne-monitored trajectories (Euler-Maruyama).

The monitored channel is c = -i sqrt(kappa_A) a, so <c + c^dag> = sqrt(kappa_A) <Y_A>
and the recorded current is J_k = sqrt(eta_h kappa_A) <Y_A>_k + dW_k/dt.

Two solvers:
  * solve_sme_trajectory: conditional density matrix, any eta_h.
  * solve_sme_pure: state vector, eta_h = 1 only. Every unmonitored channel
    gets its own diffusive unravelling with an unrecorded noise; the marginal
    statistics of J are unchanged.
"""

from __future__ import annotations

import logging
import math
import warnings
from enum import Enum
from typing import Dict, Sequence

import numpy as np

from photon_detector.errors import (
    ShapeMismatchError,
    TrajectoryAbortedError,
    TruncationWarning,
)
from photon_detector.hilbert import QuantumState
from photon_detector.model import SystemModel
from photon_detector.solvers.grid import TimeGrid, TrajectoryRecord, bin_means

logger = logging.getLogger(__name__)


class SolverChoice(str, Enum):
    AUTO = "auto"
    MIXED = "mixed"
    PURE = "pure"


def derive_seed(base_seed: int, index: int) -> int:
    """64-bit seed of trajectory `index`, independent of scheduling."""
    ss = np.random.SeedSequence(int(base_seed), spawn_key=(int(index),))
    return int(ss.generate_state(1, np.uint64)[0])


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(int(seed)))


def _weights(model: SystemModel, names: Sequence[str]) -> Dict[str, np.ndarray]:
    return {name: np.ascontiguousarray(model.observable(name).to_dense().T).reshape(-1) for name in names}


def _check_dims(model: SystemModel, state0: QuantumState) -> None:
    d = model.space.total_dim
    if state0.dim != d:
        raise ShapeMismatchError(f"state dim {state0.dim} does not match total_dim {d}")


def _finish(
    model: SystemModel,
    grid: TimeGrid,
    seed: int,
    index: int,
    J: np.ndarray,
    samples: Dict[str, np.ndarray],
    top: np.ndarray,
    truncation_tolerance: float,
) -> TrajectoryRecord:
    stride = grid.record_stride
    max_top = float(top.max()) if top.size else 0.0
    if max_top >= truncation_tolerance:
        message = f"trajectory {index}: top level of A reached {max_top:.3g}"
        logger.warning(message)
        warnings.warn(message, TruncationWarning, stacklevel=3)
    return TrajectoryRecord(
        index=index,
        seed=seed,
        status="success",
        J=bin_means(J, stride),
        traces={name: bin_means(v, stride) for name, v in samples.items()} or None,
        final_top_level_pop=float(top[-1]) if top.size else 0.0,
        max_top_level_pop=max_top,
    )


def solve_sme_trajectory(
    model: SystemModel,
    state0: QuantumState,
    grid: TimeGrid,
    seed: int,
    observables: Sequence[str] = (),
    index: int = 0,
    state_tolerance: float = 1e-6,
    validity_check_stride: int = 500,
    truncation_tolerance: float = 1e-6,
) -> TrajectoryRecord:
    """Mixed-state SME with post-step Hermitization and trace renormalization.

    Raises TrajectoryAbortedError when the conditional state leaves the
    physical set by more than `state_tolerance`.
    """
    _check_dims(model, state0)
    grid.check_stability(model.max_rate)
    d = model.space.total_dim
    n = grid.n_steps
    dt = grid.dt
    eta = model.eta_h

    h_eff = model.H
    for ch in model.channels:
        h_eff = h_eff - (ch.op.dag() @ ch.op) * 0.5j
    h_eff = h_eff.matrix
    jumps = [ch.op.matrix for ch in model.channels]
    c = (model.monitored.op * (-1j)).matrix
    sqrt_eta = math.sqrt(eta)

    weights = _weights(model, observables)
    w_y = np.ascontiguousarray(model.Y_meas.to_dense().T).reshape(-1)
    diag = np.arange(d) * (d + 1)
    top_idx = diag[model.top_level_mask]

    rng = make_rng(seed)
    dW = rng.standard_normal(n) * math.sqrt(dt)

    rho = np.array(state0.to_density().data, dtype=complex)
    J = np.empty(n)
    top = np.empty(n)
    samples = {name: np.empty(n) for name in weights}

    for k in range(n):
        flat = rho.reshape(-1)
        for name, w in weights.items():
            samples[name][k] = (w @ flat).real
        top[k] = flat[top_idx].real.sum()
        e = math.sqrt(model.config.kappa_A) * (w_y @ flat).real  # <c + c^dag>
        J[k] = sqrt_eta * e + dW[k] / dt

        x = h_eff @ rho
        drift = -1j * (x - x.conj().T)
        for L in jumps:
            drift += L @ (L @ rho).conj().T
        crho = c @ rho
        diffusion = crho + crho.conj().T - e * rho
        rho = rho + drift * dt + sqrt_eta * dW[k] * np.asarray(diffusion)
        rho = 0.5 * (rho + rho.conj().T)
        tr = np.trace(rho).real
        if not math.isfinite(tr) or tr <= 0:
            raise TrajectoryAbortedError(f"trajectory {index}: trace {tr!r} at step {k}", step=k)
        rho /= tr

        if validity_check_stride and (k + 1) % validity_check_stride == 0:
            lowest = float(np.linalg.eigvalsh(rho)[0])
            if lowest < -state_tolerance:
                raise TrajectoryAbortedError(
                    f"trajectory {index}: eigenvalue {lowest:.3g} at step {k}", step=k
                )

    return _finish(model, grid, seed, index, J, samples, top, truncation_tolerance)


def solve_sme_pure(
    model: SystemModel,
    state0: QuantumState,
    grid: TimeGrid,
    seed: int,
    observables: Sequence[str] = (),
    index: int = 0,
    state_tolerance: float = 1e-6,
    validity_check_stride: int = 500,
    truncation_tolerance: float = 1e-6,
) -> TrajectoryRecord:
    """State-vector unravelling for eta_h = 1; falls back to the mixed solver otherwise."""
    kwargs = dict(
        observables=observables,
        index=index,
        state_tolerance=state_tolerance,
        validity_check_stride=validity_check_stride,
        truncation_tolerance=truncation_tolerance,
    )
    if model.eta_h < 1.0 or not state0.is_pure:
        logger.warning(
            "Pure-state solver needs eta_h = 1 and a pure initial state "
            "(eta_h=%.3g, pure=%s); using the mixed-state solver",
            model.eta_h,
            state0.is_pure,
        )
        return solve_sme_trajectory(model, state0, grid, seed, **kwargs)

    _check_dims(model, state0)
    grid.check_stability(model.max_rate)
    n = grid.n_steps
    dt = grid.dt

    h_eff = model.H
    for ch in model.channels:
        h_eff = h_eff - (ch.op.dag() @ ch.op) * 0.5j
    h_eff = h_eff.matrix
    # monitored channel first so column 0 of the noise is the recorded one
    ops = [(model.monitored.op * (-1j)).matrix] + [ch.op.matrix for ch in model.unmonitored]
    obs = {name: model.observable(name).matrix for name in observables}
    top_mask = model.top_level_mask

    rng = make_rng(seed)
    dW = rng.standard_normal((n, len(ops))) * math.sqrt(dt)

    psi = np.array(state0.data, dtype=complex)
    J = np.empty(n)
    top = np.empty(n)
    samples = {name: np.empty(n) for name in obs}

    for k in range(n):
        for name, O in obs.items():
            samples[name][k] = np.vdot(psi, O @ psi).real
        top[k] = float(np.sum(np.abs(psi[top_mask]) ** 2))

        drift = -1j * (h_eff @ psi)
        noise = np.zeros_like(psi)
        for j, L in enumerate(ops):
            l_psi = L @ psi
            e_j = 2.0 * np.vdot(psi, l_psi).real
            if j == 0:
                J[k] = e_j + dW[k, 0] / dt
            drift += 0.5 * e_j * l_psi - 0.125 * e_j**2 * psi
            noise += (l_psi - 0.5 * e_j * psi) * dW[k, j]
        psi = psi + drift * dt + noise
        nrm = np.linalg.norm(psi)
        if not math.isfinite(nrm) or nrm == 0:
            raise TrajectoryAbortedError(f"trajectory {index}: norm {nrm!r} at step {k}", step=k)
        psi /= nrm

    return _finish(model, grid, seed, index, J, samples, top, truncation_tolerance)
