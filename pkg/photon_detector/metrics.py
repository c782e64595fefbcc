"""
Efficiency, dark-count rate, measurement window, fidelity and ROC curves.

F = (eta + 1 - Gamma_dark * tau_m) / 2. Every estimate carries an error bar:
binomial for eta, Poisson for counted dark clicks, and a split-half spread for
the Gaussian level-crossing estimate.
"""

from __future__ import annotations

import logging
import math
import warnings
from enum import Enum
from typing import List, Sequence

import numpy as np
from pydantic import BaseModel
from scipy import stats

from photon_detector.detection import DetectionResult, Window, window_slice, first_crossing_times
from photon_detector.errors import EmptyInputError, OutOfRegimeWarning, UnreliableEstimateWarning

logger = logging.getLogger(__name__)

FIDELITY_PLATEAU = 1e-4
NORMALITY_P_MIN = 1e-3
STATIONARITY_REL_TOL = 0.1
NORMALTEST_MAX_SAMPLES = 5000
# tau_m candidates are this many integrator steps apart
WINDOW_STEP_FACTOR = 10


class DarkCountMethod(str, Enum):
    EMPIRICAL = "EMPIRICAL"
    GAUSSIAN_ESTIMATE = "GAUSSIAN_ESTIMATE"


class EfficiencyEstimate(BaseModel):
    eta: float
    error: float
    n_click: int
    n_traj: int


class DarkCountEstimate(BaseModel):
    rate: float
    error: float
    method: DarkCountMethod
    is_upper_bound: bool = False
    reliable: bool = True
    n_click: int = 0
    n_traj: int = 0


class RocPoint(BaseModel):
    y_thr: float
    gamma_dark: float
    gamma_dark_error: float
    eta: float
    eta_error: float
    method: DarkCountMethod
    is_upper_bound: bool = False


class MetricsSummary(BaseModel):
    """Operating point of one detector run, flat enough to dump as JSON."""

    eta: float
    eta_error: float
    gamma_dark: float
    gamma_dark_error: float
    tau_m: float
    fidelity: float
    fidelity_error: float
    y_thr: float
    n_traj: int
    n_click: int
    n_traj_vacuum: int
    n_click_vacuum: int
    method_dark: DarkCountMethod
    dark_is_upper_bound: bool = False
    dark_reliable: bool = True
    out_of_regime: bool = False
    config_hash: str | None = None
    base_seed: int | None = None


def efficiency(results: Sequence[DetectionResult]) -> EfficiencyEstimate:
    """eta = n_click / n_traj with standard error sqrt(eta (1 - eta) / n_traj)."""
    n = len(results)
    if n == 0:
        raise EmptyInputError("efficiency needs at least one signal result")
    n_click = sum(1 for r in results if r.clicked)
    eta = n_click / n
    return EfficiencyEstimate(eta=eta, error=math.sqrt(eta * (1 - eta) / n), n_click=n_click, n_traj=n)


def dark_count_empirical(vacuum_results: Sequence[DetectionResult], record_length: float) -> DarkCountEstimate:
    """Counted vacuum clicks per unit time; zero clicks give the 1/(n T) bound."""
    n = len(vacuum_results)
    if n == 0:
        raise EmptyInputError("dark-count estimate needs at least one vacuum result")
    if not record_length > 0:
        raise ValueError(f"record_length must be positive, got {record_length}")
    exposure = n * record_length
    n_click = sum(1 for r in vacuum_results if r.clicked)
    if n_click == 0:
        return DarkCountEstimate(
            rate=1.0 / exposure,
            error=0.0,
            method=DarkCountMethod.EMPIRICAL,
            is_upper_bound=True,
            n_click=0,
            n_traj=n,
        )
    return DarkCountEstimate(
        rate=n_click / exposure,
        error=math.sqrt(n_click) / exposure,
        method=DarkCountMethod.EMPIRICAL,
        n_click=n_click,
        n_traj=n,
    )


def _upcrossing_rate(region: np.ndarray, y_thr: float, dt: float) -> float:
    r0 = float(np.mean(region**2))
    slope = np.diff(region, axis=1) / dt
    r2 = float(np.mean(slope**2))
    if r0 <= 0:
        return 0.0
    return math.sqrt(r2 / r0) / (2 * math.pi) * math.exp(-(y_thr**2) / (2 * r0))


def dark_count_gaussian_estimate(
    filtered_vacuum: np.ndarray,
    y_thr: float,
    dt: float,
    stationary_from: int = 0,
) -> DarkCountEstimate:
    """Rice upcrossing rate of the filtered vacuum treated as a stationary Gaussian process.

    Gamma = (1/2pi) sqrt(-r''(0)/r(0)) exp(-Y^2 / 2 r(0)); r(0) and -r''(0) are
    the sample variances of the process and of its finite-difference slope over
    samples from `stationary_from` on.
    """
    data = np.atleast_2d(np.asarray(filtered_vacuum, dtype=float))
    region = data[:, stationary_from:]
    if region.shape[0] == 0 or region.shape[1] < 4:
        raise EmptyInputError("not enough stationary samples for the Gaussian estimate")
    region = region - region.mean()

    rate = _upcrossing_rate(region, y_thr, dt)
    if region.shape[0] >= 2:
        half = region.shape[0] // 2
        spread = abs(_upcrossing_rate(region[:half], y_thr, dt) - _upcrossing_rate(region[half:], y_thr, dt))
        error = 0.5 * spread
    else:
        error = float("nan")

    reliable = True
    flat = region.reshape(-1)
    step = max(1, flat.size // NORMALTEST_MAX_SAMPLES)
    if flat[::step].size >= 20:
        _, p_value = stats.normaltest(flat[::step])
        if p_value < NORMALITY_P_MIN:
            reliable = False
            logger.warning("Filtered vacuum fails the normality test (p=%.2g)", p_value)
    mid = region.shape[1] // 2
    v1, v2 = float(np.var(region[:, :mid])), float(np.var(region[:, mid:]))
    if abs(v1 - v2) > STATIONARITY_REL_TOL * max(v1, v2):
        reliable = False
        logger.warning("Filtered vacuum variance drifts between halves (%.4g vs %.4g)", v1, v2)
    if not reliable:
        warnings.warn(
            f"Gaussian dark-count estimate at Y_thr={y_thr} is unreliable",
            UnreliableEstimateWarning,
            stacklevel=2,
        )
    return DarkCountEstimate(
        rate=rate,
        error=error,
        method=DarkCountMethod.GAUSSIAN_ESTIMATE,
        reliable=reliable,
        n_traj=data.shape[0],
    )


def fidelity(eta: float, gamma_dark: float, tau_m: float) -> float:
    """(eta + 1 - Gamma_dark tau_m) / 2, warning when Gamma_dark tau_m > 1."""
    if gamma_dark * tau_m > 1:
        message = f"Gamma_dark*tau_m = {gamma_dark * tau_m:.3g} > 1; fidelity is out of regime"
        logger.warning(message)
        warnings.warn(message, OutOfRegimeWarning, stacklevel=2)
    return 0.5 * (eta + 1.0 - gamma_dark * tau_m)


def fidelity_error(eta_error: float, gamma_error: float, tau_m: float) -> float:
    return 0.5 * math.sqrt(eta_error**2 + (tau_m * gamma_error) ** 2)


def efficiency_vs_window(tau_c: np.ndarray, tau_grid: np.ndarray) -> np.ndarray:
    """eta(tau) = fraction of trajectories whose first crossing is at or before tau."""
    tau_c = np.sort(np.asarray(tau_c, dtype=float))
    if tau_c.size == 0:
        raise EmptyInputError("no signal trajectories")
    return np.searchsorted(tau_c, tau_grid, side="right") / tau_c.size


def choose_window(tau_grid: Sequence[float], eta_of_tau: Sequence[float], gamma_dark: float) -> float:
    """Smallest tau whose fidelity is within FIDELITY_PLATEAU of the grid maximum."""
    tau_grid = np.asarray(tau_grid, dtype=float)
    eta_of_tau = np.asarray(eta_of_tau, dtype=float)
    if tau_grid.size == 0:
        raise EmptyInputError("empty window grid")
    f = 0.5 * (eta_of_tau + 1.0 - gamma_dark * tau_grid)
    best = f.max()
    order = np.argsort(tau_grid)
    for i in order:
        if f[i] >= best - FIDELITY_PLATEAU:
            return float(tau_grid[i])
    return float(tau_grid[order[-1]])


def window_grid(record_length: float, step: float) -> np.ndarray:
    """Candidate window lengths, `step` apart, up to the record length."""
    if not step > 0:
        raise ValueError(f"window step must be positive, got {step}")
    return np.arange(1, int(record_length / step + 1e-9) + 1) * step


def _dark_count(
    vac_peaks: np.ndarray,
    filtered_vacuum: np.ndarray,
    y_thr: float,
    dt: float,
    record_length: float,
    stationary_from: int,
) -> DarkCountEstimate:
    results = [DetectionResult(bool(p > y_thr), None, float(p)) for p in vac_peaks]
    empirical = dark_count_empirical(results, record_length)
    if empirical.n_click > 0:
        return empirical
    return dark_count_gaussian_estimate(filtered_vacuum, y_thr, dt, stationary_from)


def roc_curve(
    filtered_signal: np.ndarray,
    filtered_vacuum: np.ndarray,
    thresholds: Sequence[float],
    dt: float,
    window: Window | None = None,
    stationary_from: int = 0,
) -> List[RocPoint]:
    """(Gamma_dark, eta) per threshold, ordered from the highest threshold down.

    Zero counted dark clicks switch to the Gaussian estimate. Mixing the two
    can break monotonicity, so Gamma_dark is replaced by its running maximum
    along decreasing threshold.
    """
    if len(thresholds) == 0:
        raise EmptyInputError("empty threshold grid")
    sig = np.atleast_2d(filtered_signal)
    vac = np.atleast_2d(filtered_vacuum)
    sl = window_slice(sig.shape[1], dt, window)
    record_length = (sl.stop - sl.start) * dt
    sig_peaks = sig[:, sl].max(axis=1)
    vac_peaks = vac[:, sl].max(axis=1)

    points: List[RocPoint] = []
    running = 0.0
    for y in sorted(thresholds, reverse=True):
        n_click = int(np.sum(sig_peaks > y))
        eta = n_click / sig_peaks.size
        dark = _dark_count(vac_peaks, vac, y, dt, record_length, stationary_from)
        running = max(running, dark.rate)
        points.append(
            RocPoint(
                y_thr=float(y),
                gamma_dark=running,
                gamma_dark_error=dark.error,
                eta=eta,
                eta_error=math.sqrt(eta * (1 - eta) / sig_peaks.size),
                method=dark.method,
                is_upper_bound=dark.is_upper_bound,
            )
        )
    return points


def summarize(
    filtered_signal: np.ndarray,
    filtered_vacuum: np.ndarray,
    thresholds: Sequence[float],
    dt: float,
    tau_m: float | None = None,
    stationary_from: int = 0,
    window_step: float | None = None,
    config_hash: str | None = None,
    base_seed: int | None = None,
) -> MetricsSummary:
    """Fidelity-optimal operating point over the threshold grid.

    For each threshold the dark-count rate comes from the full vacuum record
    and tau_m from choose_window (unless fixed by the caller); eta is the click
    fraction within [0, tau_m].

    Candidate windows are `window_step` apart; pass WINDOW_STEP_FACTOR times
    the integrator dt when records are coarser than the integrator grid.
    """
    if len(thresholds) == 0:
        raise EmptyInputError("empty threshold grid")
    sig = np.atleast_2d(filtered_signal)
    vac = np.atleast_2d(filtered_vacuum)
    if sig.shape[0] == 0 or vac.shape[0] == 0:
        raise EmptyInputError("need both signal and vacuum records")
    n_samples = sig.shape[1]
    record_length = n_samples * dt
    step = window_step if window_step is not None else WINDOW_STEP_FACTOR * dt
    grid = window_grid(record_length, step) if tau_m is None else np.array([tau_m])
    vac_peaks = vac.max(axis=1)

    best: MetricsSummary | None = None
    for y in thresholds:
        dark = _dark_count(vac_peaks, vac, y, dt, record_length, stationary_from)
        tau_c = first_crossing_times(sig, y, dt)
        eta_grid = efficiency_vs_window(tau_c, grid)
        tau = choose_window(grid, eta_grid, dark.rate)
        n_click = int(np.sum(tau_c <= tau))
        n = sig.shape[0]
        eta = n_click / n
        eta_err = math.sqrt(eta * (1 - eta) / n)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", OutOfRegimeWarning)
            f = fidelity(eta, dark.rate, tau)
        candidate = MetricsSummary(
            eta=eta,
            eta_error=eta_err,
            gamma_dark=dark.rate,
            gamma_dark_error=dark.error,
            tau_m=tau,
            fidelity=f,
            fidelity_error=fidelity_error(eta_err, dark.error, tau),
            y_thr=float(y),
            n_traj=n,
            n_click=n_click,
            n_traj_vacuum=vac.shape[0],
            n_click_vacuum=dark.n_click,
            method_dark=dark.method,
            dark_is_upper_bound=dark.is_upper_bound,
            dark_reliable=dark.reliable,
            out_of_regime=dark.rate * tau > 1,
            config_hash=config_hash,
            base_seed=base_seed,
        )
        logger.debug("Y_thr=%.3f: eta=%.4f Gamma=%.3g tau_m=%.4g F=%.4f", y, eta, dark.rate, tau, f)
        if best is None or candidate.fidelity > best.fidelity:
            best = candidate

    if best.out_of_regime:
        warnings.warn(
            f"best operating point has Gamma_dark*tau_m = {best.gamma_dark * best.tau_m:.3g} > 1",
            OutOfRegimeWarning,
            stacklevel=2,
        )
    logger.info(
        "Operating point: Y_thr=%.3f eta=%.4f+-%.4f Gamma_dark=%.3g (%s) tau_m=%.4g F=%.4f",
        best.y_thr,
        best.eta,
        best.eta_error,
        best.gamma_dark,
        best.method_dark.value,
        best.tau_m,
        best.fidelity,
    )
    return best
