"""Exceptions and warnings raised by the photon_detector package."""


class PhotonDetectorError(Exception):
    """Base class for all package errors."""


class InvalidDimensionError(PhotonDetectorError, ValueError):
    """Truncation dimension below the two-level minimum."""


class UnknownSubsystemError(PhotonDetectorError, KeyError):
    """Label not present in a HilbertSpace."""


class ShapeMismatchError(PhotonDetectorError, ValueError):
    """Operator/state shapes or record time steps do not line up."""


class MisconfigurationError(PhotonDetectorError, ValueError):
    """DetectorConfig does not fit the requested builder or operation."""


class InvalidDecoherenceError(MisconfigurationError):
    """T1/T2 pair implies a negative pure-dephasing rate."""


class StepSizeError(MisconfigurationError):
    """Integrator step violates the stability guard."""


class InvalidStateError(PhotonDetectorError, ValueError):
    """State violates normalization, Hermiticity or positivity."""


class TrajectoryAbortedError(PhotonDetectorError, RuntimeError):
    """Conditional state left the physical set beyond tolerance."""

    def __init__(self, message: str, step: int | None = None):
        super().__init__(message)
        self.step = step


class FilterConstructionError(PhotonDetectorError, ValueError):
    """Matched filter cannot be built from the given traces."""


class EmptyInputError(PhotonDetectorError, ValueError):
    """An operation received no data to work on."""


class MissingArtifactError(PhotonDetectorError, FileNotFoundError):
    """A run directory lacks a file a later stage depends on."""


# --- warnings -------------------------------------------------------------


class TruncationWarning(UserWarning):
    """Top Fock level of the measurement mode got populated."""


class UnreliableEstimateWarning(UserWarning):
    """Filtered vacuum failed the stationarity or normality diagnostics."""


class OutOfRegimeWarning(UserWarning):
    """Gamma_dark * tau_m exceeds one, fidelity formula no longer meaningful."""


class BudgetExhaustedWarning(UserWarning):
    """Optimizer stopped on its evaluation budget."""


class NegativeTrapTimeWarning(UserWarning):
    """Excess dwell time came out negative and was clamped to zero."""
