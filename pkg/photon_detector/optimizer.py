"""
Detuning search for dark-state trapping.

The surrogate score is the time an excitation absorbed into the bright
state spends in the absorbers within a finite window, int <N_B> dt, from a
deterministic master-equation run with the measurement switched off
(g_z = 0). With g_z = 0 mode A decouples, so it is kept at two levels.
The full objective runs signal and vacuum ensembles and returns the
detection fidelity.
"""

from __future__ import annotations

import logging
import math
import warnings
from enum import Enum
from typing import List, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy.integrate import simpson
from scipy.linalg import expm
from scipy.optimize import minimize

from photon_detector.detection import build_filter, filter_signal
from photon_detector.errors import (
    BudgetExhaustedWarning,
    MisconfigurationError,
    NegativeTrapTimeWarning,
    TrajectoryAbortedError,
)
from photon_detector.hilbert import HilbertSpace, QuantumState
from photon_detector.metrics import WINDOW_STEP_FACTOR, summarize
from photon_detector.model import (
    DetectorConfig,
    Truncation,
    Variant,
    absorber_label,
    build_model,
    initial_state,
)
from photon_detector.solvers.ensemble import run_ensemble
from photon_detector.solvers.grid import TimeGrid
from photon_detector.solvers.master import solve_master

logger = logging.getLogger(__name__)


class FreeParameter(str, Enum):
    DELTAS = "deltas"
    G_Z = "g_z"


class Objective(str, Enum):
    SURROGATE = "SURROGATE"
    FULL_FIDELITY = "FULL_FIDELITY"


class FidelitySettings(BaseModel):
    """Ensemble settings used by the FULL_FIDELITY objective."""

    model_config = ConfigDict(frozen=True)

    grid: TimeGrid
    n_traj: int = Field(default=200, ge=1)
    base_seed: int = 0
    thresholds: Tuple[float, ...] = (2.0, 2.5, 3.0, 3.5, 4.0)
    max_workers: int = 1
    chunk_size: int = 50


class OptimizationProblem(BaseModel):
    model_config = ConfigDict(frozen=True)

    base: DetectorConfig
    free: Tuple[FreeParameter, ...] = (FreeParameter.DELTAS,)
    objective: Objective = Objective.SURROGATE
    budget: int = Field(default=200, ge=0)
    restarts: int = Field(default=2, ge=0)
    search_seed: int = 0
    delta_bound: float | None = Field(default=None, gt=0)
    g_z_bounds: Tuple[float, float] = (0.05, 3.0)
    surrogate_window: float | None = Field(default=None, gt=0)
    surrogate_dt: float = Field(default=0.05, gt=0)
    fidelity: FidelitySettings | None = None

    @model_validator(mode="after")
    def _check(self) -> "OptimizationProblem":
        if not self.free:
            raise ValueError("at least one free parameter is required")
        if self.base.variant is not Variant.IDEAL:
            raise ValueError("the optimizer works on the ideal model")
        if self.objective is Objective.SURROGATE and FreeParameter.G_Z in self.free:
            raise ValueError("the surrogate runs at g_z = 0 and cannot optimize g_z")
        if self.objective is Objective.FULL_FIDELITY and self.fidelity is None:
            raise ValueError("FULL_FIDELITY needs a 'fidelity' settings block")
        lo, hi = self.g_z_bounds
        if not 0 <= lo < hi:
            raise ValueError(f"invalid g_z bounds {self.g_z_bounds}")
        return self

    @property
    def bound(self) -> float:
        """|Delta_i| <= bound; defaults to kappa_B."""
        return self.delta_bound if self.delta_bound is not None else self.base.kappa_B

    @property
    def window(self) -> float:
        return self.surrogate_window if self.surrogate_window is not None else default_window(self.base)

    def bounds(self) -> List[Tuple[float, float]]:
        out: List[Tuple[float, float]] = []
        if FreeParameter.DELTAS in self.free:
            out += [(-self.bound, self.bound)] * self.base.n_absorbers
        if FreeParameter.G_Z in self.free:
            out.append(tuple(self.g_z_bounds))
        return out

    def initial_point(self) -> np.ndarray:
        x: List[float] = []
        if FreeParameter.DELTAS in self.free:
            x += [float(np.clip(d, -self.bound, self.bound)) for d in self.base.deltas]
        if FreeParameter.G_Z in self.free:
            x.append(float(np.clip(self.base.g_z, *self.g_z_bounds)))
        return np.array(x)

    def to_config(self, x: Sequence[float]) -> DetectorConfig:
        """Apply a parameter vector.

        Detunings are measured from the ensemble mean, so they are centred
        (then clipped back into bounds) and sorted to quotient permutations.
        """
        update = {}
        i = 0
        if FreeParameter.DELTAS in self.free:
            n = self.base.n_absorbers
            d = np.asarray(x[i : i + n], dtype=float)
            d = np.clip(d - d.mean(), -self.bound, self.bound)
            update["deltas"] = tuple(sorted(float(v) for v in d))
            i += n
        if FreeParameter.G_Z in self.free:
            update["g_z"] = float(x[i])
        return self.base.model_copy(update=update)


class OptimizationStatus(str, Enum):
    COMPLETE = "COMPLETE"
    INCOMPLETE = "INCOMPLETE"


class EvaluationRecord(BaseModel):
    iteration: int
    restart: int
    deltas: Tuple[float, ...]
    g_z: float
    score: float


class OptimizationResult(BaseModel):
    best_config: DetectorConfig
    best_score: float | None
    status: OptimizationStatus
    evaluations: List[EvaluationRecord]
    objective: Objective

    @property
    def best_deltas(self) -> Tuple[float, ...]:
        return self.best_config.deltas


def default_window(cfg: DetectorConfig) -> float:
    """Photon duration 1/kappa_C, the longest timescale of the ideal model."""
    if cfg.kappa_C > 0:
        return 1.0 / cfg.kappa_C
    if cfg.kappa_B > 0:
        return 10.0 / cfg.kappa_B
    raise MisconfigurationError("surrogate window needs kappa_C > 0 or kappa_B > 0")


def _surrogate_config(deltas: Sequence[float], cfg: DetectorConfig) -> DetectorConfig:
    if cfg.variant is not Variant.IDEAL:
        raise MisconfigurationError("surrogate objective needs the ideal model")
    if len(deltas) != cfg.n_absorbers:
        raise MisconfigurationError(f"expected {cfg.n_absorbers} detunings, got {len(deltas)}")
    return cfg.model_copy(
        update={
            "deltas": tuple(float(d) for d in deltas),
            "g_z": 0.0,
            "with_photon": False,
            "truncation": Truncation(dim_A=2, dim_B=cfg.truncation.dim_B, dim_C=cfg.truncation.dim_C),
        }
    )


def bright_state(cfg: DetectorConfig, space: HilbertSpace) -> QuantumState:
    """One excitation in b_+ = sum_i b_i / sqrt(N), source and mode A empty."""
    psi = np.zeros(space.total_dim, dtype=complex)
    for i in range(cfg.n_absorbers):
        psi[space.basis_index({absorber_label(i): 1})] = 1.0
    return QuantumState.pure(psi)


def surrogate_objective(
    deltas: Sequence[float],
    cfg: DetectorConfig,
    window: float | None = None,
    dt: float = 0.05,
) -> float:
    """Dwell time int_0^window <N_B> dt of an excitation absorbed into the bright state.

    Measurement is off (g_z = 0). The window bounds the credit given to
    excitations parked in a dark state longer than the detector integrates;
    at Delta = 0 the score is (1 - exp(-kappa_B window)) / kappa_B for any N.
    """
    sc = _surrogate_config(deltas, cfg)
    window = default_window(cfg) if window is None else float(window)
    if window <= 0:
        raise MisconfigurationError(f"surrogate window must be positive, got {window}")
    n = max(1, math.ceil(window / dt - 1e-9))
    h = window / n
    model = build_model(sc)
    # one extra step so the samples end exactly at the window edge
    grid = TimeGrid(t_end=window + h, dt=h)
    traces = solve_master(model, bright_state(sc, model.space), grid, observables=("N_B",))
    if not traces.truncation_ok:
        raise MisconfigurationError("surrogate trace left the truncated space")
    return float(simpson(traces["N_B"][: n + 1], x=traces.times[: n + 1]))


def linear_dwell_time(deltas: Sequence[float], kappa_B: float, window: float) -> float:
    """Closed-form windowed dwell time for g_z = 0 from the single-excitation amplitudes.

    v = (b_1..b_N) obeys dv/dt = M v with v0 the bright state; the Gramian
    X = int_0^window v v^dag dt comes from one matrix exponential of the
    block generator [[-M, v0 v0^dag], [0, M^dag]] and the dwell time is tr X.
    """
    n = len(deltas)
    if n == 0 or window <= 0:
        raise MisconfigurationError("need at least one detuning and a positive window")
    m = np.full((n, n), -kappa_B / (2 * n), dtype=complex)
    m -= 1j * np.diag(np.asarray(deltas, dtype=float))
    v0 = np.full(n, 1 / math.sqrt(n), dtype=complex)
    block = np.zeros((2 * n, 2 * n), dtype=complex)
    block[:n, :n] = -m
    block[:n, n:] = np.outer(v0, v0.conj())
    block[n:, n:] = m.conj().T
    e = expm(block * window)
    gramian = e[n:, n:].conj().T @ e[:n, n:]
    return float(np.trace(gramian).real)


def trap_time(
    deltas: Sequence[float],
    cfg: DetectorConfig,
    window: float | None = None,
    dt: float = 0.05,
) -> float:
    """Excess windowed dwell time over the resonant (all-zero detuning) reference, clamped at 0."""
    excess = surrogate_objective(deltas, cfg, window, dt) - surrogate_objective(
        [0.0] * cfg.n_absorbers, cfg, window, dt
    )
    if excess < 0:
        message = f"negative excess dwell time {excess:.3g} clamped to 0 for deltas={tuple(deltas)}"
        logger.warning(message)
        warnings.warn(message, NegativeTrapTimeWarning, stacklevel=2)
        return 0.0
    return float(excess)


def fidelity_objective(cfg: DetectorConfig, settings: FidelitySettings) -> float:
    """Best fidelity over the threshold grid from fixed-seed signal and vacuum ensembles."""
    signal_cfg = cfg.model_copy(update={"with_photon": True})
    vacuum_cfg = cfg.model_copy(update={"with_photon": False})
    signal_model = build_model(signal_cfg)
    vacuum_model = build_model(vacuum_cfg)
    traces = solve_master(signal_model, initial_state(signal_cfg, signal_model.space), settings.grid, ("Y_A",))
    f = build_filter(traces)

    def currents(model, seed):
        records = run_ensemble(
            model,
            settings.grid,
            settings.n_traj,
            seed,
            max_workers=settings.max_workers,
            chunk_size=settings.chunk_size,
        )
        ok = [r.J for r in records if r.ok]
        if not ok:
            raise TrajectoryAbortedError(
                f"all {len(records)} trajectories failed for deltas={cfg.deltas} g_z={cfg.g_z}; first error: {records[0].error}"
            )
        return np.vstack(ok)

    sig = filter_signal(currents(signal_model, settings.base_seed), f)
    vac = filter_signal(currents(vacuum_model, settings.base_seed + 1), f)
    summary = summarize(
        sig,
        vac,
        settings.thresholds,
        f.dt,
        stationary_from=f.settling_index(),
        window_step=WINDOW_STEP_FACTOR * settings.grid.dt,
    )
    return summary.fidelity


class _BudgetExhausted(Exception):
    pass


def optimize(problem: OptimizationProblem) -> OptimizationResult:
    """Bounded Nelder-Mead with random restarts, maximizing the chosen objective.

    Deterministic given problem.search_seed. Every evaluation is logged; running
    out of budget returns the best point so far flagged INCOMPLETE.
    """
    rng = np.random.default_rng(problem.search_seed)
    bounds = problem.bounds()
    lo = np.array([b[0] for b in bounds])
    hi = np.array([b[1] for b in bounds])
    log: List[EvaluationRecord] = []
    best = {"x": problem.initial_point(), "score": None}

    if problem.objective is Objective.SURROGATE:
        def score_fn(cfg: DetectorConfig) -> float:
            return surrogate_objective(cfg.deltas, cfg, problem.window, problem.surrogate_dt)
    else:
        def score_fn(cfg: DetectorConfig) -> float:
            return fidelity_objective(cfg, problem.fidelity)

    restart_id = 0

    def negative_score(x: np.ndarray) -> float:
        if len(log) >= problem.budget:
            raise _BudgetExhausted
        x = np.clip(x, lo, hi)
        cfg = problem.to_config(x)
        score = score_fn(cfg)
        log.append(
            EvaluationRecord(
                iteration=len(log),
                restart=restart_id,
                deltas=cfg.deltas,
                g_z=cfg.g_z,
                score=score,
            )
        )
        logger.info("eval %d (restart %d): deltas=%s g_z=%.4g score=%.6g", len(log) - 1, restart_id, cfg.deltas, cfg.g_z, score)
        if best["score"] is None or score > best["score"]:
            best["x"], best["score"] = x.copy(), score
        return -score

    status = OptimizationStatus.COMPLETE
    starts = [problem.initial_point()] + [rng.uniform(lo, hi) for _ in range(problem.restarts)]
    try:
        for restart_id, x0 in enumerate(starts):
            remaining = problem.budget - len(log)
            if remaining <= 0:
                raise _BudgetExhausted
            res = minimize(
                negative_score,
                x0,
                method="Nelder-Mead",
                bounds=bounds,
                options={"maxfev": remaining, "xatol": 1e-4, "fatol": 1e-8},
            )
            if not res.success and len(log) >= problem.budget:
                raise _BudgetExhausted
    except _BudgetExhausted:
        status = OptimizationStatus.INCOMPLETE

    if status is OptimizationStatus.INCOMPLETE:
        message = f"optimizer budget of {problem.budget} evaluations exhausted"
        logger.warning(message)
        warnings.warn(message, BudgetExhaustedWarning, stacklevel=2)

    return OptimizationResult(
        best_config=problem.to_config(best["x"]),
        best_score=best["score"],
        status=status,
        evaluations=log,
        objective=problem.objective,
    )

