"""
Experiment-file schema and run bookkeeping.

Physical keys carry their unit in the name. Ideal-regime files use kappa_B as
the unit (`*_in_kB_units`, `*_in_inverse_kB`); dispersive files use
`*_over_2pi_MHz` (converted to 2*pi*f rad/us) and `*_us`.
"""

from __future__ import annotations

import math
from pathlib import Path
from typing import Annotated, Any, Dict, List, Literal, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field, model_validator

from photon_detector.model import (
    DetectorConfig,
    DispersiveParams,
    Truncation,
    Variant,
    max_rate,
)
from photon_detector.optimizer import (
    FidelitySettings,
    FreeParameter,
    Objective,
    OptimizationProblem,
)
from photon_detector.presets import load_yaml_file
from photon_detector.solvers.grid import TimeGrid
from photon_detector.solvers.stochastic import SolverChoice

TWO_PI = 2.0 * math.pi


class _Block(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class IdealDetectorBlock(_Block):
    """Rates in units of kappa_B (so kappa_B itself is 1)."""

    regime: Literal["ideal"]
    n_absorbers: int = Field(ge=1)
    kappa_A_in_kB_units: float = Field(gt=0)
    kappa_C_in_kB_units: float = Field(ge=0)
    g_z_in_kB_units: float = Field(ge=0)
    deltas_in_kB_units: List[float] | None = None
    eta_h: float = Field(default=1.0, gt=0, le=1)
    truncation: Truncation = Truncation()

    def to_detector_config(self, with_photon: bool = True) -> DetectorConfig:
        return DetectorConfig(
            n_absorbers=self.n_absorbers,
            kappa_A=self.kappa_A_in_kB_units,
            kappa_B=1.0,
            kappa_C=self.kappa_C_in_kB_units,
            g_z=self.g_z_in_kB_units,
            deltas=tuple(self.deltas_in_kB_units or ()),
            eta_h=self.eta_h,
            variant=Variant.IDEAL,
            truncation=self.truncation,
            with_photon=with_photon,
        )


class DispersiveDetectorBlock(_Block):
    regime: Literal["dispersive"]
    n_absorbers: int = Field(ge=1)
    kappa_B_over_2pi_MHz: float = Field(gt=0)
    kappa_A_over_2pi_MHz: float = Field(gt=0)
    kappa_C_over_2pi_MHz: float = Field(ge=0)
    chi_over_2pi_MHz: float
    alpha: float
    delta_plus_over_2pi_MHz: float = 0.0
    deltas_over_2pi_MHz: List[float] | None = None
    T1_us: float | None = Field(default=None, gt=0)
    T2_us: float | None = Field(default=None, gt=0)
    eta_h: float = Field(default=1.0, gt=0, le=1)
    truncation: Truncation = Truncation()

    def to_detector_config(self, with_photon: bool = True) -> DetectorConfig:
        return DetectorConfig(
            n_absorbers=self.n_absorbers,
            kappa_A=TWO_PI * self.kappa_A_over_2pi_MHz,
            kappa_B=TWO_PI * self.kappa_B_over_2pi_MHz,
            kappa_C=TWO_PI * self.kappa_C_over_2pi_MHz,
            deltas=tuple(TWO_PI * d for d in (self.deltas_over_2pi_MHz or ())),
            eta_h=self.eta_h,
            variant=Variant.DISPERSIVE,
            dispersive=DispersiveParams(
                chi=TWO_PI * self.chi_over_2pi_MHz,
                alpha=self.alpha,
                delta_plus=TWO_PI * self.delta_plus_over_2pi_MHz,
                T1=self.T1_us,
                T2=self.T2_us,
            ),
            truncation=self.truncation,
            with_photon=with_photon,
        )


DetectorBlock = Annotated[Union[IdealDetectorBlock, DispersiveDetectorBlock], Field(discriminator="regime")]

# suffix per regime for time-valued keys
_TIME_SUFFIX = {"ideal": "in_inverse_kB", "dispersive": "us"}


def _pick(block: BaseModel, stem: str, regime: str) -> float | None:
    """Value of `<stem>_<suffix>` for this regime; the other regime's key must be unset."""
    own = f"{stem}_{_TIME_SUFFIX[regime]}"
    other = f"{stem}_{_TIME_SUFFIX['dispersive' if regime == 'ideal' else 'ideal']}"
    if getattr(block, other) is not None:
        raise ValueError(f"'{other}' does not match the {regime} regime; use '{own}'")
    return getattr(block, own)


class GridBlock(_Block):
    t_end_in_inverse_kB: float | None = Field(default=None, ge=0)
    dt_in_inverse_kB: float | None = Field(default=None, gt=0)
    t_end_us: float | None = Field(default=None, ge=0)
    dt_us: float | None = Field(default=None, gt=0)
    record_stride: int = Field(default=1, ge=1)

    def to_time_grid(self, regime: str) -> TimeGrid:
        t_end = _pick(self, "t_end", regime)
        dt = _pick(self, "dt", regime)
        if t_end is None or dt is None:
            suffix = _TIME_SUFFIX[regime]
            raise ValueError(f"grid needs t_end_{suffix} and dt_{suffix}")
        return TimeGrid(t_end=t_end, dt=dt, record_stride=self.record_stride)


class RunBlock(_Block):
    n_traj: int = Field(ge=1)
    base_seed: int = Field(default=0, ge=0)
    solver: SolverChoice = SolverChoice.AUTO
    signal: bool = True
    vacuum: bool = True


class ThresholdGrid(_Block):
    start: float = Field(gt=0)
    stop: float = Field(gt=0)
    step: float = Field(gt=0)

    def values(self) -> List[float]:
        if self.stop < self.start:
            raise ValueError("threshold_grid.stop must be >= start")
        n = int(math.floor((self.stop - self.start) / self.step + 1e-9)) + 1
        return [round(self.start + k * self.step, 10) for k in range(n)]


class DetectionBlock(_Block):
    threshold: float | None = Field(default=None, gt=0)
    thresholds: List[Annotated[float, Field(gt=0)]] | None = None
    threshold_grid: ThresholdGrid | None = None
    tau_m_in_inverse_kB: float | None = Field(default=None, gt=0)
    tau_m_us: float | None = Field(default=None, gt=0)
    histogram_bin_in_inverse_kB: float | None = Field(default=None, gt=0)
    histogram_bin_us: float | None = Field(default=None, gt=0)
    histogram_offset_in_inverse_kB: float | None = None
    histogram_offset_us: float | None = None

    @model_validator(mode="after")
    def _need_threshold(self) -> "DetectionBlock":
        if self.threshold is None and not self.thresholds and self.threshold_grid is None:
            raise ValueError("detection needs 'threshold', 'thresholds' or 'threshold_grid'")
        if self.threshold_grid is not None:
            self.threshold_grid.values()
        return self

    def threshold_values(self) -> List[float]:
        if self.thresholds:
            return sorted(set(self.thresholds))
        if self.threshold is not None:
            return [self.threshold]
        return self.threshold_grid.values()


class OutputBlock(_Block):
    directory: str | None = None
    write_csv: bool = False


class OptimizationBlock(_Block):
    free: List[FreeParameter] = [FreeParameter.DELTAS]
    objective: Objective = Objective.SURROGATE
    budget: int = Field(default=200, ge=0)
    restarts: int = Field(default=2, ge=0)
    search_seed: int = 0
    delta_bound_in_kB_units: float | None = Field(default=None, gt=0)
    g_z_bounds_in_kB_units: Tuple[float, float] = (0.05, 3.0)
    surrogate_window_in_inverse_kB: float | None = Field(default=None, gt=0)
    surrogate_dt_in_inverse_kB: float = Field(default=0.05, gt=0)
    fidelity_n_traj: int = Field(default=200, ge=1)


class ExperimentConfig(_Block):
    """Fully validated experiment file; nothing runs before this parses."""

    detector: DetectorBlock
    grid: GridBlock
    run: RunBlock
    detection: DetectionBlock
    output: OutputBlock = OutputBlock()
    optimization: OptimizationBlock | None = None

    @model_validator(mode="after")
    def _cross_check(self) -> "ExperimentConfig":
        regime = self.regime
        grid = self.grid.to_time_grid(regime)
        _pick(self.detection, "tau_m", regime)
        _pick(self.detection, "histogram_bin", regime)
        _pick(self.detection, "histogram_offset", regime)
        cfg = self.detector.to_detector_config()
        grid.check_stability(max_rate(cfg))
        if self.optimization is not None and regime != "ideal":
            raise ValueError("optimization blocks are only supported for the ideal regime")
        return self

    @property
    def regime(self) -> str:
        return self.detector.regime

    @property
    def time_unit(self) -> str:
        return "1/kappa_B" if self.regime == "ideal" else "us"

    def detector_config(self, with_photon: bool = True) -> DetectorConfig:
        return self.detector.to_detector_config(with_photon)

    def time_grid(self) -> TimeGrid:
        return self.grid.to_time_grid(self.regime)

    def thresholds(self) -> List[float]:
        return self.detection.threshold_values()

    def tau_m(self) -> float | None:
        return _pick(self.detection, "tau_m", self.regime)

    def histogram_bin(self) -> float:
        value = _pick(self.detection, "histogram_bin", self.regime)
        return value if value is not None else 20 * self.time_grid().record_dt

    def histogram_offset(self) -> float:
        return _pick(self.detection, "histogram_offset", self.regime) or 0.0

    def optimization_problem(self) -> OptimizationProblem:
        if self.optimization is None:
            raise ValueError("config has no 'optimization' block")
        o = self.optimization
        fidelity = None
        if o.objective is Objective.FULL_FIDELITY:
            fidelity = FidelitySettings(
                grid=self.time_grid(),
                n_traj=o.fidelity_n_traj,
                base_seed=self.run.base_seed,
                thresholds=tuple(self.thresholds()),
            )
        return OptimizationProblem(
            base=self.detector_config(),
            free=tuple(o.free),
            objective=o.objective,
            budget=o.budget,
            restarts=o.restarts,
            search_seed=o.search_seed,
            delta_bound=o.delta_bound_in_kB_units,
            g_z_bounds=o.g_z_bounds_in_kB_units,
            surrogate_window=o.surrogate_window_in_inverse_kB or self.tau_m(),
            surrogate_dt=o.surrogate_dt_in_inverse_kB,
            fidelity=fidelity,
        )

    def with_overrides(
        self,
        base_seed: int | None = None,
        n_traj: int | None = None,
        directory: str | None = None,
        eta_h: float | None = None,
    ) -> "ExperimentConfig":
        """Re-validated copy with CLI overrides applied."""
        data = self.model_dump(mode="json")
        if base_seed is not None:
            data["run"]["base_seed"] = base_seed
        if n_traj is not None:
            data["run"]["n_traj"] = n_traj
        if directory is not None:
            data["output"]["directory"] = directory
        if eta_h is not None:
            data["detector"]["eta_h"] = eta_h
        return ExperimentConfig.model_validate(data)


def load_experiment_config(path: str | Path) -> ExperimentConfig:
    return ExperimentConfig.model_validate(load_yaml_file(path))


class RunManifest(BaseModel):
    """Written before a run starts and finalized when it ends."""

    config_hash: str
    base_seed: int
    tool_version: str
    command: str
    started_at: str
    finished_at: str | None = None
    status: Literal["running", "success", "error"] = "running"
    n_traj: Dict[str, int] = {}
    n_failed: Dict[str, int] = {}
    max_top_level_pop: float = 0.0
    truncation_ok: bool = True
    inventory: Dict[str, str] = {}
    notes: List[str] = []

    @property
    def diagnostic_failure(self) -> bool:
        """Truncation breach or aborted trajectories; the CLI exits with 2."""
        return not self.truncation_ok or any(self.n_failed.values())


class FigureRow(BaseModel):
    """One row of a fidelity/efficiency reproduction table."""

    preset: str
    n_absorbers: int
    eta_h: float
    eta: float
    eta_error: float
    gamma_dark: float
    gamma_dark_error: float
    tau_m: float
    fidelity: float
    fidelity_error: float
    y_thr: float
    method_dark: str

    def as_row(self) -> List[Any]:
        return list(self.model_dump(mode="json").values())
