"""
Matched filtering and threshold clicks.

The filter follows the unconditional <Y_A(t)> trace and is normalized to unit
L2 norm (sum f_k^2 dt = 1), so filtered vacuum noise has unit variance once the
filter has fully entered the record and thresholds read as multiples of that
standard deviation. Sample k sits at t_k = k*dt.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np
from scipy.signal import fftconvolve

from photon_detector.errors import (
    EmptyInputError,
    FilterConstructionError,
    ShapeMismatchError,
)
from photon_detector.solvers.grid import ExpectationTraces

logger = logging.getLogger(__name__)

Window = Tuple[float, float]


@dataclass(frozen=True, eq=False)
class MatchedFilter:
    samples: np.ndarray
    dt: float

    def __post_init__(self):
        norm = float(np.sum(self.samples**2) * self.dt)
        if not math.isclose(norm, 1.0, rel_tol=1e-10):
            raise FilterConstructionError(f"filter L2 norm {norm:.12g} is not 1")

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def times(self) -> np.ndarray:
        return np.arange(len(self.samples)) * self.dt

    def settling_index(self, fraction: float = 0.99) -> int:
        """First sample k at which sum_{j<=k} f_j^2 dt reaches `fraction`.

        From there on the filtered vacuum variance is within `fraction` of 1.
        """
        cumulative = np.cumsum(self.samples**2) * self.dt
        return int(np.searchsorted(cumulative, fraction, side="left"))


def build_filter(traces: ExpectationTraces | np.ndarray, dt: float | None = None, name: str = "Y_A") -> MatchedFilter:
    """f proportional to the unconditional <Y_A(t)>, rescaled to unit L2 norm."""
    if isinstance(traces, ExpectationTraces):
        y = np.asarray(traces[name], dtype=float)
        dt = traces.record_dt if dt is None else dt
    else:
        y = np.asarray(traces, dtype=float)
    if dt is None or dt <= 0:
        raise FilterConstructionError("filter needs a positive sample spacing (at least two samples)")
    energy = float(np.sum(y**2) * dt)
    if energy == 0.0 or not math.isfinite(energy):
        raise FilterConstructionError(f"trace {name!r} is identically zero; no filter shape to match")
    return MatchedFilter(samples=y / math.sqrt(energy), dt=float(dt))


def filter_signal(J: np.ndarray, f: MatchedFilter, dt: float | None = None) -> np.ndarray:
    """Causal convolution Jbar_k = sum_{j<=k} J_j f_{k-j} dt.

    Accepts one record (1-D) or a batch (trajectory x sample). The output has
    the record's length; nothing is padded past its end.
    """
    if dt is not None and not math.isclose(dt, f.dt, rel_tol=1e-9):
        raise ShapeMismatchError(f"record dt {dt:.6g} does not match filter dt {f.dt:.6g}")
    J = np.asarray(J, dtype=float)
    if J.ndim == 1:
        n = J.shape[0]
        return fftconvolve(J, f.samples)[:n] * f.dt
    if J.ndim == 2:
        n = J.shape[1]
        return fftconvolve(J, f.samples[np.newaxis, :], axes=1)[:, :n] * f.dt
    raise ShapeMismatchError(f"expected 1-D or 2-D currents, got shape {J.shape}")


filter_batch = filter_signal


@dataclass(frozen=True)
class DetectionResult:
    clicked: bool
    tau_c: float | None
    max_filtered: float


def window_slice(n: int, dt: float, window: Window | None) -> slice:
    if n == 0:
        raise EmptyInputError("no samples to detect on")
    if window is None:
        return slice(0, n)
    t_a, t_b = window
    lo = max(0, int(math.ceil(t_a / dt - 1e-9)))
    hi = min(n, int(math.floor(t_b / dt + 1e-9)) + 1)
    if hi <= lo:
        raise EmptyInputError(f"window {window} contains no samples")
    return slice(lo, hi)


def detect(filtered: np.ndarray, y_thr: float, dt: float, window: Window | None = None) -> DetectionResult:
    """Click iff the windowed maximum of the filtered current exceeds y_thr."""
    if not y_thr > 0:
        raise ValueError(f"threshold must be positive, got {y_thr}")
    filtered = np.asarray(filtered, dtype=float)
    sl = window_slice(filtered.shape[-1], dt, window)
    seg = filtered[sl]
    peak = float(seg.max())
    clicked = peak > y_thr
    tau_c = None
    if clicked:
        tau_c = (sl.start + int(np.argmax(seg > y_thr))) * dt
    return DetectionResult(clicked=clicked, tau_c=tau_c, max_filtered=peak)


def detect_batch(
    filtered: np.ndarray, y_thr: float, dt: float, window: Window | None = None
) -> List[DetectionResult]:
    """Vectorized detect over a (trajectory x sample) array."""
    if not y_thr > 0:
        raise ValueError(f"threshold must be positive, got {y_thr}")
    filtered = np.atleast_2d(np.asarray(filtered, dtype=float))
    sl = window_slice(filtered.shape[1], dt, window)
    seg = filtered[:, sl]
    peaks = seg.max(axis=1)
    above = seg > y_thr
    first = np.argmax(above, axis=1)
    clicked = peaks > y_thr
    return [
        DetectionResult(
            clicked=bool(c),
            tau_c=float((sl.start + k) * dt) if c else None,
            max_filtered=float(p),
        )
        for c, k, p in zip(clicked, first, peaks)
    ]


def first_crossing_times(
    filtered: np.ndarray, y_thr: float, dt: float, window: Window | None = None
) -> np.ndarray:
    """tau_c per trajectory, +inf where there is no click."""
    filtered = np.atleast_2d(np.asarray(filtered, dtype=float))
    sl = window_slice(filtered.shape[1], dt, window)
    above = filtered[:, sl] > y_thr
    hit = above.any(axis=1)
    tau = (sl.start + np.argmax(above, axis=1)) * dt
    return np.where(hit, tau, np.inf)


@dataclass(frozen=True, eq=False)
class CrossingHistogram:
    """Click-time density; `offset` is a plotting shift, raw tau_c are untouched."""

    edges: np.ndarray
    density: np.ndarray
    n_clicks: int
    bin_width: float
    offset: float = 0.0

    @property
    def empty(self) -> bool:
        return self.n_clicks == 0

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.edges[:-1] + self.edges[1:]) - self.offset

    def area(self) -> float:
        return float(np.sum(self.density) * self.bin_width)


def crossing_histogram(
    results: Sequence[DetectionResult], bin_width: float, offset: float = 0.0
) -> CrossingHistogram:
    """Histogram of tau_c over clicked results, normalized to unit area."""
    if not bin_width > 0:
        raise ValueError(f"bin_width must be positive, got {bin_width}")
    taus = np.array([r.tau_c for r in results if r.clicked], dtype=float)
    if taus.size == 0:
        logger.warning("No clicks among %d results; histogram is empty", len(results))
        return CrossingHistogram(np.zeros(0), np.zeros(0), 0, bin_width, offset)
    # integer bin index; float edges can land inside the data and drop a click
    k = np.floor(taus / bin_width).astype(np.int64)
    counts = np.bincount(k - k.min())
    edges = (k.min() + np.arange(counts.size + 1)) * bin_width
    density = counts / (taus.size * bin_width)
    return CrossingHistogram(edges, density, int(taus.size), bin_width, offset)


def photon_waveform(times: np.ndarray, kappa_C: float) -> np.ndarray:
    """Emission-time density of the source photon, kappa_C exp(-kappa_C t) for t >= 0."""
    times = np.asarray(times, dtype=float)
    return np.where(times >= 0, kappa_C * np.exp(-kappa_C * np.clip(times, 0, None)), 0.0)
