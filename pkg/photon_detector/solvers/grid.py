"""Time grid and result containers shared by the master-equation and trajectory solvers."""

from __future__ import annotations

import logging
import math
from typing import Dict, List, Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from photon_detector.errors import ShapeMismatchError, StepSizeError

logger = logging.getLogger(__name__)

# max_rate * dt must stay below this for Euler-Maruyama to behave
STABILITY_LIMIT = 0.02


class TimeGrid(BaseModel):
    """Integrator grid. Records hold bin means over `record_stride` steps."""

    model_config = ConfigDict(frozen=True)

    t_end: float = Field(ge=0)
    dt: float = Field(gt=0)
    record_stride: int = Field(default=1, ge=1)

    @model_validator(mode="after")
    def _check_finite(self) -> "TimeGrid":
        if not math.isfinite(self.t_end):
            raise ValueError("t_end must be finite")
        return self

    @property
    def n_steps(self) -> int:
        """ceil(t_end/dt), rounded up to a whole number of record bins."""
        raw = math.ceil(self.t_end / self.dt - 1e-9) if self.t_end > 0 else 0
        return self.n_records * self.record_stride if raw else 0

    @property
    def n_records(self) -> int:
        raw = math.ceil(self.t_end / self.dt - 1e-9) if self.t_end > 0 else 0
        return math.ceil(raw / self.record_stride)

    @property
    def record_dt(self) -> float:
        return self.dt * self.record_stride

    @property
    def times(self) -> np.ndarray:
        """Start time of every record bin, t_k = k * record_dt."""
        return np.arange(self.n_records) * self.record_dt

    @property
    def step_times(self) -> np.ndarray:
        return np.arange(self.n_steps) * self.dt

    def check_stability(self, max_rate: float) -> None:
        product = max_rate * self.dt
        if product > STABILITY_LIMIT:
            raise StepSizeError(
                f"max_rate*dt = {product:.4g} exceeds {STABILITY_LIMIT} "
                f"(max_rate={max_rate:.4g}, dt={self.dt:.4g}); "
                f"use dt <= {STABILITY_LIMIT / max_rate:.4g}"
            )

    def halved(self) -> "TimeGrid":
        """Same record resolution with twice as many integrator steps."""
        return TimeGrid(t_end=self.t_end, dt=self.dt / 2, record_stride=self.record_stride * 2)


def bin_means(values: np.ndarray, stride: int) -> np.ndarray:
    """Average consecutive blocks of `stride` samples along the first axis."""
    values = np.asarray(values)
    if stride == 1:
        return values
    if values.shape[0] % stride:
        raise ShapeMismatchError(f"{values.shape[0]} samples do not split into bins of {stride}")
    return values.reshape(values.shape[0] // stride, stride, *values.shape[1:]).mean(axis=1)


class ExpectationTraces(BaseModel):
    """Named real expectation-value series sampled on a grid's record times."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    times: np.ndarray
    values: Dict[str, np.ndarray]
    max_top_level_pop: float = 0.0
    max_trace_error: float = 0.0
    truncation_ok: bool = True

    @model_validator(mode="after")
    def _check_lengths(self) -> "ExpectationTraces":
        n = len(self.times)
        for name, series in self.values.items():
            if len(series) != n:
                raise ShapeMismatchError(f"trace {name!r} has {len(series)} samples, expected {n}")
        return self

    @property
    def record_dt(self) -> float:
        if len(self.times) < 2:
            return 0.0
        return float(self.times[1] - self.times[0])

    @property
    def names(self) -> List[str]:
        return list(self.values)

    def __getitem__(self, name: str) -> np.ndarray:
        try:
            return self.values[name]
        except KeyError:
            raise KeyError(f"no trace {name!r}; have {self.names}") from None


class TrajectoryRecord(BaseModel):
    """One homodyne realization (or the reason it failed)."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    index: int
    seed: int
    status: Literal["success", "error"]
    J: np.ndarray | None = None
    traces: Dict[str, np.ndarray] | None = None
    final_top_level_pop: float = 0.0
    max_top_level_pop: float = 0.0
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.status == "success"
