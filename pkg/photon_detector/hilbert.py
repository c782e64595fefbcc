"""
Operator algebra on truncated tensor-product Hilbert spaces.

Subsystem ordering is fixed at construction (C, B_1..B_N, A for every detector
model) and all embedded operators follow it. Operators are immutable; states
are plain containers owned by one solver at a time.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from enum import Enum
from functools import reduce
from typing import Mapping, Sequence, Tuple

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import norm as sparse_norm

from photon_detector.errors import (
    InvalidDimensionError,
    InvalidStateError,
    ShapeMismatchError,
    UnknownSubsystemError,
)

logger = logging.getLogger(__name__)

# Below this total dimension dense arrays beat CSR overhead.
DENSE_LIMIT = 64


@dataclass(frozen=True)
class SubsystemSpec:
    """One tensor factor: a label and its truncation dimension."""

    label: str
    dim: int

    def __post_init__(self):
        if self.dim < 2:
            raise InvalidDimensionError(
                f"subsystem {self.label!r}: dim must be >= 2, got {self.dim}"
            )


@dataclass(frozen=True)
class HilbertSpace:
    """Ordered tensor product of truncated subsystems."""

    subsystems: Tuple[SubsystemSpec, ...]

    def __post_init__(self):
        labels = [s.label for s in self.subsystems]
        if not labels:
            raise ValueError("HilbertSpace needs at least one subsystem")
        if len(set(labels)) != len(labels):
            raise ValueError(f"duplicate subsystem labels: {labels}")

    @classmethod
    def of(cls, *pairs: Tuple[str, int]) -> "HilbertSpace":
        return cls(tuple(SubsystemSpec(label, dim) for label, dim in pairs))

    @property
    def labels(self) -> Tuple[str, ...]:
        return tuple(s.label for s in self.subsystems)

    @property
    def dims(self) -> Tuple[int, ...]:
        return tuple(s.dim for s in self.subsystems)

    @property
    def total_dim(self) -> int:
        return int(np.prod(self.dims))

    def index_of(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise UnknownSubsystemError(f"no subsystem {label!r} in {self.labels}") from None

    def dim_of(self, label: str) -> int:
        return self.subsystems[self.index_of(label)].dim

    def basis_index(self, levels: Mapping[str, int]) -> int:
        """Flat index of the product basis state; unspecified subsystems sit in level 0."""
        for label in levels:
            self.index_of(label)
        idx = 0
        for spec in self.subsystems:
            level = int(levels.get(spec.label, 0))
            if not 0 <= level < spec.dim:
                raise InvalidDimensionError(
                    f"level {level} outside truncation of {spec.label!r} (dim {spec.dim})"
                )
            idx = idx * spec.dim + level
        return idx

    def level_mask(self, label: str, level: int) -> np.ndarray:
        """Boolean mask over basis indices where `label` is in `level`."""
        pos = self.index_of(label)
        grid = np.indices(self.dims).reshape(len(self.dims), -1)
        return grid[pos] == level


# --- operators -----------------------------------------------------------


def _as_representation(matrix, dim: int):
    if dim < DENSE_LIMIT:
        return matrix.toarray() if sp.issparse(matrix) else np.asarray(matrix, dtype=complex)
    if sp.issparse(matrix):
        return sp.csr_matrix(matrix, dtype=complex)
    return sp.csr_matrix(np.asarray(matrix, dtype=complex))


@dataclass(frozen=True, eq=False)
class Operator:
    """Complex linear operator on `space` (CSR, or dense below DENSE_LIMIT)."""

    space: HilbertSpace
    matrix: object

    def __post_init__(self):
        d = self.space.total_dim
        if self.matrix.shape != (d, d):
            raise ShapeMismatchError(
                f"operator shape {self.matrix.shape} does not match total_dim {d}"
            )

    @classmethod
    def from_matrix(cls, space: HilbertSpace, matrix) -> "Operator":
        return cls(space, _as_representation(matrix, space.total_dim))

    @classmethod
    def identity(cls, space: HilbertSpace) -> "Operator":
        return cls.from_matrix(space, sp.identity(space.total_dim, dtype=complex, format="csr"))

    @classmethod
    def zero(cls, space: HilbertSpace) -> "Operator":
        d = space.total_dim
        return cls.from_matrix(space, sp.csr_matrix((d, d), dtype=complex))

    @property
    def is_sparse(self) -> bool:
        return sp.issparse(self.matrix)

    def to_dense(self) -> np.ndarray:
        return self.matrix.toarray() if self.is_sparse else np.array(self.matrix)

    def to_sparse(self) -> sp.csr_matrix:
        return sp.csr_matrix(self.matrix) if not self.is_sparse else self.matrix

    def dag(self) -> "Operator":
        return Operator.from_matrix(self.space, self.matrix.conj().T)

    def _check_space(self, other: "Operator") -> None:
        if other.space != self.space:
            raise ShapeMismatchError("operators live on different Hilbert spaces")

    def _pair(self, other: "Operator"):
        self._check_space(other)
        if self.is_sparse and other.is_sparse:
            return self.matrix, other.matrix
        return self.to_dense(), other.to_dense()

    def __add__(self, other: "Operator") -> "Operator":
        a, b = self._pair(other)
        return Operator.from_matrix(self.space, a + b)

    def __sub__(self, other: "Operator") -> "Operator":
        a, b = self._pair(other)
        return Operator.from_matrix(self.space, a - b)

    def __neg__(self) -> "Operator":
        return Operator.from_matrix(self.space, -self.matrix)

    def __mul__(self, scalar: complex) -> "Operator":
        if isinstance(scalar, Operator):
            raise TypeError("use @ for operator products")
        return Operator.from_matrix(self.space, self.matrix * complex(scalar))

    __rmul__ = __mul__

    def __matmul__(self, other: "Operator") -> "Operator":
        a, b = self._pair(other)
        return Operator.from_matrix(self.space, a @ b)

    def commutator(self, other: "Operator") -> "Operator":
        return self @ other - other @ self

    def norm(self) -> float:
        """Frobenius norm."""
        if self.is_sparse:
            return float(sparse_norm(self.matrix))
        return float(np.linalg.norm(self.matrix))

    def is_hermitian(self, tol: float = 1e-10) -> bool:
        return (self - self.dag()).norm() < tol

    def trace(self) -> complex:
        return complex(self.matrix.diagonal().sum())

    def spectrum(self) -> np.ndarray:
        """Sorted eigenvalues (dense diagonalization, for diagnostics and tests)."""
        dense = self.to_dense()
        if np.allclose(dense, dense.conj().T):
            return np.linalg.eigvalsh(dense)
        return np.sort_complex(np.linalg.eigvals(dense))


def _single_space(dim: int, label: str) -> HilbertSpace:
    return HilbertSpace.of((label, dim))


def annihilation(dim: int, label: str = "mode") -> Operator:
    """Truncated ladder operator: M[n-1, n] = sqrt(n)."""
    if dim < 2:
        raise InvalidDimensionError(f"annihilation operator needs dim >= 2, got {dim}")
    m = sp.diags(np.sqrt(np.arange(1, dim, dtype=float)), offsets=1, shape=(dim, dim))
    return Operator.from_matrix(_single_space(dim, label), m.astype(complex))


def number(dim: int, label: str = "mode") -> Operator:
    a = annihilation(dim, label)
    return a.dag() @ a


def embed(op: Operator, target: str, space: HilbertSpace) -> Operator:
    """I ⊗ … ⊗ op ⊗ … ⊗ I, with op placed on subsystem `target`."""
    pos = space.index_of(target)
    if len(op.space.subsystems) != 1:
        raise ShapeMismatchError("embed expects a single-subsystem operator")
    if op.space.total_dim != space.dims[pos]:
        raise ShapeMismatchError(
            f"operator dim {op.space.total_dim} != dim of {target!r} ({space.dims[pos]})"
        )
    factors = [
        op.to_sparse() if i == pos else sp.identity(d, dtype=complex, format="csr")
        for i, d in enumerate(space.dims)
    ]
    full = reduce(lambda x, y: sp.kron(x, y, format="csr"), factors)
    return Operator.from_matrix(space, full)


def mode_operator(space: HilbertSpace, label: str) -> Operator:
    """Embedded annihilation operator of subsystem `label`."""
    return embed(annihilation(space.dim_of(label), label), label, space)


def quadratures(a: Operator) -> Tuple[Operator, Operator]:
    """X = a + a†, Y = -i(a - a†)."""
    ad = a.dag()
    return a + ad, (a - ad) * (-1j)


# --- states --------------------------------------------------------------


class StateKind(str, Enum):
    PURE = "pure"
    MIXED = "mixed"


@dataclass(frozen=True, eq=False)
class QuantumState:
    """PURE: state vector of length total_dim. MIXED: total_dim x total_dim density matrix."""

    kind: StateKind
    data: np.ndarray

    @classmethod
    def pure(cls, vector: Sequence[complex], normalize: bool = True) -> "QuantumState":
        psi = np.asarray(vector, dtype=complex).reshape(-1)
        if normalize:
            nrm = np.linalg.norm(psi)
            if nrm == 0:
                raise InvalidStateError("zero vector cannot be normalized")
            psi = psi / nrm
        return cls(StateKind.PURE, psi)

    @classmethod
    def mixed(cls, rho) -> "QuantumState":
        rho = np.asarray(rho, dtype=complex)
        if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
            raise ShapeMismatchError(f"density matrix must be square, got {rho.shape}")
        return cls(StateKind.MIXED, rho)

    @property
    def is_pure(self) -> bool:
        return self.kind is StateKind.PURE

    @property
    def dim(self) -> int:
        return int(self.data.shape[0])

    def normalized(self) -> "QuantumState":
        if self.is_pure:
            return QuantumState.pure(self.data, normalize=True)
        rho = 0.5 * (self.data + self.data.conj().T)
        return QuantumState(StateKind.MIXED, rho / np.trace(rho).real)

    def to_density(self) -> "QuantumState":
        if not self.is_pure:
            return self
        return QuantumState(StateKind.MIXED, np.outer(self.data, self.data.conj()))

    def validate(self, tol: float = 1e-9, eig_tol: float = 1e-8) -> "QuantumState":
        if self.is_pure:
            nrm2 = float(np.vdot(self.data, self.data).real)
            if abs(nrm2 - 1.0) > tol:
                raise InvalidStateError(f"|psi|^2 = {nrm2:.12g}, expected 1")
            return self
        rho = self.data
        tr = complex(np.trace(rho))
        if abs(tr - 1.0) > tol:
            raise InvalidStateError(f"trace = {tr:.12g}, expected 1")
        herm = float(np.max(np.abs(rho - rho.conj().T)))
        if herm > tol:
            raise InvalidStateError(f"density matrix not Hermitian (max dev {herm:.3g})")
        lowest = float(np.linalg.eigvalsh(0.5 * (rho + rho.conj().T))[0])
        if lowest < -eig_tol:
            raise InvalidStateError(f"negative eigenvalue {lowest:.3g}")
        return self


def basis_state(space: HilbertSpace, levels: Mapping[str, int] | None = None) -> QuantumState:
    psi = np.zeros(space.total_dim, dtype=complex)
    psi[space.basis_index(levels or {})] = 1.0
    return QuantumState(StateKind.PURE, psi)


def coherent_amplitudes(dim: int, alpha: complex) -> np.ndarray:
    """Truncated (then renormalized) Fock amplitudes of a coherent state."""
    n = np.arange(dim)
    log_fact = np.cumsum(np.log(np.maximum(n, 1)))
    amps = np.exp(-0.5 * abs(alpha) ** 2 - 0.5 * log_fact) * np.power(complex(alpha), n)
    return amps / np.linalg.norm(amps)


def expectation(state: QuantumState, op: Operator) -> complex:
    """<psi|O|psi> for PURE, tr(O rho) for MIXED."""
    d = op.space.total_dim
    if state.dim != d:
        raise ShapeMismatchError(f"state dim {state.dim} != operator dim {d}")
    if state.is_pure:
        return complex(np.vdot(state.data, op.matrix @ state.data))
    if op.is_sparse:
        # tr(O rho) = sum_ij O_ij rho_ji
        return complex(op.matrix.multiply(state.data.T).sum())
    return complex(np.einsum("ij,ji->", op.matrix, state.data))
