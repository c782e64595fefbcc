"""
Detector models: cascaded source C -> absorbers B_1..B_N -> measurement mode A.

All builders work in the frame rotating at the common absorber/source
frequency, so only detunings survive. Rates are in whatever unit the caller
picked (kappa_B units for the ideal regime, rad/us for the dispersive one);
the builders never convert.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, Mapping, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from photon_detector.errors import (
    InvalidDecoherenceError,
    MisconfigurationError,
    ShapeMismatchError,
)
from photon_detector.hilbert import (
    HilbertSpace,
    Operator,
    QuantumState,
    basis_state,
    mode_operator,
    quadratures,
)

logger = logging.getLogger(__name__)

DEFAULT_DIM_A = {"ideal": 15, "dispersive": 20}


class Variant(str, Enum):
    IDEAL = "ideal"
    DISPERSIVE = "dispersive"


class Truncation(BaseModel):
    """Fock-space cutoffs. dim_A=None picks the variant default."""

    model_config = ConfigDict(frozen=True)

    dim_A: int | None = Field(default=None, ge=2)
    dim_B: int = Field(default=2, ge=2)
    dim_C: int = Field(default=2, ge=2)


class DispersiveParams(BaseModel):
    """Transmon-side parameters of the dispersive implementation.

    T1/T2 of None mean "no such channel": T1=None drops relaxation,
    T2=None drops pure dephasing.
    """

    model_config = ConfigDict(frozen=True)

    chi: float
    alpha: float
    delta_plus: float = 0.0
    T1: float | None = Field(default=None, gt=0)
    T2: float | None = Field(default=None, gt=0)

    @property
    def relaxation_rate(self) -> float:
        return 0.0 if self.T1 is None else 1.0 / self.T1

    @property
    def dephasing_rate(self) -> float:
        """gamma_phi = 1/T2 - 1/(2 T1); may come out negative for bad pairs."""
        if self.T2 is None:
            return 0.0
        return 1.0 / self.T2 - 0.5 * self.relaxation_rate


class DetectorConfig(BaseModel):
    """Physical and numerical parameters of one detector model."""

    model_config = ConfigDict(frozen=True)

    n_absorbers: int = Field(ge=1)
    kappa_A: float = Field(gt=0)
    kappa_B: float = Field(ge=0)
    kappa_C: float = Field(ge=0)
    g_z: float = Field(default=0.0, ge=0)
    deltas: Tuple[float, ...] = ()
    eta_h: float = Field(default=1.0, gt=0, le=1)
    variant: Variant = Variant.IDEAL
    dispersive: DispersiveParams | None = None
    truncation: Truncation = Truncation()
    with_photon: bool = True

    @model_validator(mode="before")
    @classmethod
    def _fill_derived(cls, data: Any) -> Any:
        if not isinstance(data, Mapping):
            return data
        data = dict(data)
        n = int(data.get("n_absorbers") or 0)
        if not data.get("deltas") and n >= 1:
            data["deltas"] = (0.0,) * n
        variant = Variant(data.get("variant", Variant.IDEAL))
        disp = data.get("dispersive")
        if variant is Variant.DISPERSIVE and disp is not None:
            if isinstance(disp, Mapping):
                disp = DispersiveParams(**disp)
                data["dispersive"] = disp
            derived = abs(2.0 * disp.chi * disp.alpha)
            given = data.get("g_z")
            if given is not None and not math.isclose(given, derived, rel_tol=1e-12, abs_tol=1e-15):
                raise ValueError(
                    f"g_z is derived as 2*chi*alpha = {derived:.6g} in the dispersive "
                    f"variant, got {given:.6g}"
                )
            data["g_z"] = derived
        return data

    @model_validator(mode="after")
    def _check(self) -> "DetectorConfig":
        if len(self.deltas) != self.n_absorbers:
            raise ValueError(
                f"expected {self.n_absorbers} detunings, got {len(self.deltas)}"
            )
        if self.variant is Variant.DISPERSIVE:
            if self.dispersive is None:
                raise ValueError("dispersive variant needs a 'dispersive' block")
            d = self.dispersive
            if d.T1 is not None and d.T2 is not None and d.T2 > 2 * d.T1:
                raise ValueError(f"T2 = {d.T2} exceeds 2*T1 = {2 * d.T1}")
        return self

    @property
    def dim_A(self) -> int:
        if self.truncation.dim_A is not None:
            return self.truncation.dim_A
        return DEFAULT_DIM_A[self.variant.value]

    def space(self) -> HilbertSpace:
        t = self.truncation
        return HilbertSpace.of(
            ("C", t.dim_C),
            *[(absorber_label(i), t.dim_B) for i in range(self.n_absorbers)],
            ("A", self.dim_A),
        )


def absorber_label(i: int) -> str:
    return f"B{i + 1}"


def max_rate(cfg: DetectorConfig) -> float:
    """Largest rate entering the model; sets the integrator stability guard."""
    rates = [cfg.kappa_A, cfg.kappa_B, cfg.kappa_C, cfg.g_z]
    rates.extend(abs(d) for d in cfg.deltas)
    if cfg.dispersive is not None:
        d = cfg.dispersive
        rates += [2 * abs(d.chi), abs(d.delta_plus), d.relaxation_rate, 2 * abs(d.dephasing_rate)]
    return float(max(rates))


@dataclass(frozen=True)
class CollapseChannel:
    name: str
    op: Operator
    monitored: bool = False


@dataclass(frozen=True, eq=False)
class SystemModel:
    """Hamiltonian, collapse channels and measured quadrature of one detector."""

    config: DetectorConfig
    space: HilbertSpace
    H: Operator
    channels: Tuple[CollapseChannel, ...]
    Y_meas: Operator
    observables: Mapping[str, Operator] = field(default_factory=dict)

    def __post_init__(self):
        n_mon = sum(ch.monitored for ch in self.channels)
        if n_mon != 1:
            raise MisconfigurationError(f"expected exactly one monitored channel, got {n_mon}")
        if not self.H.is_hermitian(1e-10):
            raise MisconfigurationError("Hamiltonian is not Hermitian")

    @property
    def monitored(self) -> CollapseChannel:
        return next(ch for ch in self.channels if ch.monitored)

    @property
    def unmonitored(self) -> Tuple[CollapseChannel, ...]:
        return tuple(ch for ch in self.channels if not ch.monitored)

    @property
    def eta_h(self) -> float:
        return self.config.eta_h

    @property
    def measurement_rate(self) -> float:
        """sqrt(eta_h * kappa_A), prefactor of <Y_A> in the homodyne current."""
        return math.sqrt(self.config.eta_h * self.config.kappa_A)

    @property
    def max_rate(self) -> float:
        return max_rate(self.config)

    @property
    def top_level_mask(self) -> np.ndarray:
        """Basis indices where mode A sits in its highest kept Fock level."""
        return self.space.level_mask("A", self.space.dim_of("A") - 1)

    def observable(self, name: str) -> Operator:
        try:
            return self.observables[name]
        except KeyError:
            raise KeyError(f"unknown observable {name!r}; have {sorted(self.observables)}") from None


# --- builders ------------------------------------------------------------


def _cascade_terms(space: HilbertSpace, cfg: DetectorConfig) -> Tuple[Operator, Operator, Operator]:
    """Bright mode b+, cascade Hamiltonian and the shared output channel.

    C is the source and b+ the receiver: with
    H = -i sqrt(kB kC)/2 (b+^dag c - c^dag b+) and L = sqrt(kB) b+ + sqrt(kC) c
    the source amplitude obeys d<c>/dt = -kC/2 <c> whatever kappa_B is.
    """
    c = mode_operator(space, "C")
    b_modes = [mode_operator(space, absorber_label(i)) for i in range(cfg.n_absorbers)]
    b_plus = sum(b_modes[1:], b_modes[0]) * (1.0 / math.sqrt(cfg.n_absorbers))
    s = math.sqrt(cfg.kappa_B * cfg.kappa_C)
    h_casc = (b_plus.dag() @ c - c.dag() @ b_plus) * (-0.5j * s)
    l_out = b_plus * math.sqrt(cfg.kappa_B) + c * math.sqrt(cfg.kappa_C)
    return b_plus, h_casc, l_out


def _assemble(
    cfg: DetectorConfig,
    extra_h: Operator | None = None,
    extra_channels: Tuple[CollapseChannel, ...] = (),
) -> SystemModel:
    space = cfg.space()
    a = mode_operator(space, "A")
    x_a, y_a = quadratures(a)
    n_a = a.dag() @ a
    c = mode_operator(space, "C")
    b_modes = [mode_operator(space, absorber_label(i)) for i in range(cfg.n_absorbers)]
    n_i = [b.dag() @ b for b in b_modes]
    n_b = sum(n_i[1:], n_i[0])
    b_plus, h_casc, l_out = _cascade_terms(space, cfg)

    H = (n_b @ x_a) * cfg.g_z + h_casc
    for delta, n in zip(cfg.deltas, n_i):
        if delta:
            H = H + n * delta
    if extra_h is not None:
        H = H + extra_h
    # numerical noise from the products
    H = (H + H.dag()) * 0.5

    channels = (
        CollapseChannel("homodyne", a * math.sqrt(cfg.kappa_A), monitored=True),
        CollapseChannel("cascade_output", l_out),
    ) + tuple(extra_channels)

    observables: Dict[str, Operator] = {
        "Y_A": y_a,
        "X_A": x_a,
        "N_B": n_b,
        "n_A": n_a,
        "n_C": c.dag() @ c,
        "n_bright": b_plus.dag() @ b_plus,
    }
    observables.update({f"n_{absorber_label(i)}": n for i, n in enumerate(n_i)})

    model = SystemModel(
        config=cfg,
        space=space,
        H=H,
        channels=channels,
        Y_meas=y_a,
        observables=observables,
    )
    logger.debug(
        "Built %s model: N=%d total_dim=%d channels=%d sparse=%s",
        cfg.variant.value,
        cfg.n_absorbers,
        space.total_dim,
        len(channels),
        H.is_sparse,
    )
    return model


def build_single_absorber(cfg: DetectorConfig) -> SystemModel:
    """H = g_z b^dag b X_A + cascade; channels sqrt(kA) a and sqrt(kB) b + sqrt(kC) c."""
    if cfg.n_absorbers != 1 or cfg.variant is not Variant.IDEAL:
        raise MisconfigurationError(
            f"single-absorber builder needs N=1 ideal, got N={cfg.n_absorbers} {cfg.variant.value}"
        )
    return _assemble(cfg)


def build_ensemble(cfg: DetectorConfig) -> SystemModel:
    """Inhomogeneous ensemble: g_z N_B X_A + sum_i Delta_i n_i, coupled through b+."""
    if cfg.variant is not Variant.IDEAL:
        raise MisconfigurationError("ensemble builder expects the ideal variant")
    if len(cfg.deltas) != cfg.n_absorbers:
        raise MisconfigurationError(
            f"expected {cfg.n_absorbers} detunings, got {len(cfg.deltas)}"
        )
    return _assemble(cfg)


def build_dispersive(cfg: DetectorConfig) -> SystemModel:
    """Displaced-frame transmon implementation with T1/T2 decoherence on every absorber."""
    if cfg.variant is not Variant.DISPERSIVE or cfg.dispersive is None:
        raise MisconfigurationError("dispersive builder needs a populated dispersive block")
    d = cfg.dispersive
    gamma_phi = d.dephasing_rate
    if gamma_phi < 0:
        raise InvalidDecoherenceError(
            f"T1={d.T1}, T2={d.T2} give negative pure dephasing rate {gamma_phi:.4g}"
        )

    space = cfg.space()
    a = mode_operator(space, "A")
    b_modes = [mode_operator(space, absorber_label(i)) for i in range(cfg.n_absorbers)]
    n_i = [b.dag() @ b for b in b_modes]
    n_b = sum(n_i[1:], n_i[0])
    b_plus = sum(b_modes[1:], b_modes[0]) * (1.0 / math.sqrt(cfg.n_absorbers))

    extra_h = (n_b @ (a.dag() @ a)) * (2.0 * d.chi)
    if d.delta_plus:
        extra_h = extra_h + (b_plus.dag() @ b_plus) * d.delta_plus

    extra = []
    if d.relaxation_rate > 0:
        extra += [
            CollapseChannel(f"relax_{absorber_label(i)}", b * math.sqrt(d.relaxation_rate))
            for i, b in enumerate(b_modes)
        ]
    if gamma_phi > 0:
        # sqrt(gamma_phi/2) sigma_z and sqrt(2 gamma_phi) n generate the same dissipator
        extra += [
            CollapseChannel(f"dephase_{absorber_label(i)}", n * math.sqrt(2.0 * gamma_phi))
            for i, n in enumerate(n_i)
        ]
    return _assemble(cfg, extra_h=extra_h, extra_channels=tuple(extra))


def build_model(cfg: DetectorConfig) -> SystemModel:
    if cfg.variant is Variant.DISPERSIVE:
        return build_dispersive(cfg)
    if cfg.n_absorbers == 1:
        return build_single_absorber(cfg)
    return build_ensemble(cfg)


def initial_state(cfg: DetectorConfig, space: HilbertSpace) -> QuantumState:
    """|1>_C (x) vacuum for signal runs, global vacuum for dark-count runs."""
    expected = cfg.space()
    if space.dims != expected.dims or space.labels != expected.labels:
        raise ShapeMismatchError(
            f"space {space.labels}/{space.dims} does not match config {expected.labels}/{expected.dims}"
        )
    return basis_state(space, {"C": 1} if cfg.with_photon else {})
