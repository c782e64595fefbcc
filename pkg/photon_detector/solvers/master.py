"""
Unconditional Lindblad master equation.

drho/dt = -i (H_eff rho - rho H_eff^dag) + sum_j L_j rho L_j^dag,
H_eff = H - i/2 sum_j L_j^dag L_j.
"""

from __future__ import annotations

import logging
import warnings
from typing import Dict, Iterable, Sequence

import numpy as np
from scipy.integrate import DOP853

from photon_detector.errors import ShapeMismatchError, TruncationWarning
from photon_detector.hilbert import QuantumState
from photon_detector.model import SystemModel
from photon_detector.solvers.grid import ExpectationTraces, TimeGrid, bin_means

logger = logging.getLogger(__name__)

DEFAULT_OBSERVABLES = ("Y_A", "X_A", "N_B", "n_A", "n_C", "n_bright")


class LindbladGenerator:
    """Precomputed H_eff and jump operators for repeated right-hand-side calls."""

    def __init__(self, model: SystemModel):
        self.dim = model.space.total_dim
        ops = [ch.op for ch in model.channels]
        h_eff = model.H
        for L in ops:
            h_eff = h_eff - (L.dag() @ L) * 0.5j
        self.h_eff = h_eff.matrix
        self.jumps = [L.matrix for L in ops]

    def __call__(self, rho: np.ndarray) -> np.ndarray:
        """Derivative of a Hermitian density matrix; uses rho = rho^dag."""
        x = self.h_eff @ rho
        out = -1j * (x - x.conj().T)
        for L in self.jumps:
            l_rho = L @ rho
            out += L @ l_rho.conj().T
        return np.asarray(out)

    def flat(self, t: float, y: np.ndarray) -> np.ndarray:
        return self(y.reshape(self.dim, self.dim)).reshape(-1)


def lindblad_rhs(model: SystemModel, rho: QuantumState) -> np.ndarray:
    """Time derivative of `rho` under the model's master equation."""
    state = rho.to_density()
    d = model.space.total_dim
    if state.data.shape != (d, d):
        raise ShapeMismatchError(f"state shape {state.data.shape} does not match total_dim {d}")
    return LindbladGenerator(model)(state.data)


def observable_weights(model: SystemModel, names: Iterable[str]) -> Dict[str, np.ndarray]:
    """Vectors w with tr(O rho) = w . vec(rho) for row-major vec."""
    weights = {}
    for name in names:
        op = model.observable(name)
        weights[name] = np.ascontiguousarray(op.to_dense().T).reshape(-1)
    return weights


def solve_master(
    model: SystemModel,
    state0: QuantumState,
    grid: TimeGrid,
    observables: Sequence[str] = DEFAULT_OBSERVABLES,
    rtol: float = 1e-9,
    atol: float = 1e-11,
    truncation_tolerance: float = 1e-6,
) -> ExpectationTraces:
    """Integrate the master equation and return bin-averaged expectation traces.

    Samples are taken at every integrator step t_j = j*dt and averaged over
    record bins, matching the homodyne current records of the trajectory solvers.
    A zero-length grid returns the instantaneous values of state0 at t=0.
    """
    d = model.space.total_dim
    rho0 = state0.to_density().data
    if rho0.shape != (d, d):
        raise ShapeMismatchError(f"state shape {rho0.shape} does not match total_dim {d}")

    weights = observable_weights(model, observables)
    diag_idx = np.arange(d) * (d + 1)
    top_idx = diag_idx[model.top_level_mask]

    def sample(flat_states: np.ndarray) -> Dict[str, np.ndarray]:
        # flat_states: (d*d, m)
        out = {name: (w @ flat_states).real for name, w in weights.items()}
        out["_trace"] = flat_states[diag_idx].sum(axis=0).real
        out["_top"] = flat_states[top_idx].sum(axis=0).real
        return out

    if grid.n_steps == 0:
        inst = sample(rho0.reshape(-1, 1))
        return ExpectationTraces(
            times=np.zeros(1),
            values={name: inst[name] for name in weights},
            max_top_level_pop=float(inst["_top"][0]),
        )

    generator = LindbladGenerator(model)
    step_times = grid.step_times
    samples = {name: np.empty(grid.n_steps) for name in list(weights) + ["_trace", "_top"]}

    first = sample(rho0.reshape(-1, 1))
    for name, v in first.items():
        samples[name][0] = v[0]

    solver = DOP853(
        generator.flat,
        0.0,
        rho0.reshape(-1).astype(complex),
        float(step_times[-1]),
        rtol=rtol,
        atol=atol,
    )
    filled = 1
    n_rhs_steps = 0
    while filled < grid.n_steps and solver.status == "running":
        solver.step()
        n_rhs_steps += 1
        if solver.status == "failed":
            raise RuntimeError(f"master-equation integration failed at t={solver.t:.6g}")
        # all sample times covered by this step
        upto = np.searchsorted(step_times, solver.t, side="right")
        if upto > filled:
            interp = solver.dense_output()
            ts = step_times[filled:upto]
            block = sample(interp(ts).reshape(d * d, -1))
            for name, v in block.items():
                samples[name][filled:upto] = v
            filled = upto

    stride = grid.record_stride
    values = {name: bin_means(samples[name], stride) for name in weights}
    max_top = float(np.max(samples["_top"]))
    trace_err = float(np.max(np.abs(samples["_trace"] - 1.0)))
    ok = max_top < truncation_tolerance
    if not ok:
        message = (
            f"measurement-mode top level reached population {max_top:.3g} "
            f"(tolerance {truncation_tolerance:.1g}); increase dim_A"
        )
        logger.warning(message)
        warnings.warn(message, TruncationWarning, stacklevel=2)
    logger.debug(
        "solve_master: %d samples, %d adaptive steps, max trace error %.2e",
        grid.n_steps,
        n_rhs_steps,
        trace_err,
    )
    return ExpectationTraces(
        times=grid.times,
        values=values,
        max_top_level_pop=max_top,
        max_trace_error=trace_err,
        truncation_ok=ok,
    )
