import numpy as np
import pytest
from numpy.testing import assert_allclose

from photon_detector.errors import (
    InvalidDimensionError,
    InvalidStateError,
    ShapeMismatchError,
    UnknownSubsystemError,
)
from photon_detector.hilbert import (
    DENSE_LIMIT,
    HilbertSpace,
    Operator,
    QuantumState,
    annihilation,
    basis_state,
    coherent_amplitudes,
    embed,
    expectation,
    mode_operator,
    number,
    quadratures,
)


@pytest.fixture
def space():
    return HilbertSpace.of(("C", 2), ("B1", 2), ("A", 4))


def test_space_layout(space):
    assert space.labels == ("C", "B1", "A")
    assert space.dims == (2, 2, 4)
    assert space.total_dim == 16
    assert space.index_of("A") == 2
    # C is the most significant digit
    assert space.basis_index({"C": 1}) == 8
    assert space.basis_index({"A": 3}) == 3


def test_invalid_spaces():
    with pytest.raises(InvalidDimensionError):
        HilbertSpace.of(("A", 1))
    with pytest.raises(ValueError):
        HilbertSpace.of(("A", 2), ("A", 3))
    with pytest.raises(InvalidDimensionError):
        annihilation(1)


def test_unknown_label(space):
    with pytest.raises(UnknownSubsystemError):
        space.index_of("Q")
    with pytest.raises(KeyError):
        mode_operator(space, "B7")


def test_level_out_of_range(space):
    with pytest.raises(InvalidDimensionError):
        space.basis_index({"A": 4})


def test_truncated_commutator():
    dim = 5
    a = annihilation(dim)
    comm = a.commutator(a.dag()).to_dense()
    expected = np.diag([1.0] * (dim - 1) + [-(dim - 1.0)])
    assert_allclose(comm, expected, atol=1e-12)


def test_number_operator_spectrum():
    assert_allclose(number(4).spectrum(), [0, 1, 2, 3], atol=1e-12)


def test_embedded_operators_on_different_factors_commute(space):
    c = mode_operator(space, "C")
    a = mode_operator(space, "A")
    assert c.commutator(a.dag()).norm() < 1e-12
    assert c.commutator(a).norm() < 1e-12


def test_embed_matches_kron(space):
    a = annihilation(4, "A")
    full = embed(a, "A", space).to_dense()
    assert_allclose(full, np.kron(np.eye(4), a.to_dense()), atol=1e-14)


def test_embed_rejects_wrong_dim(space):
    with pytest.raises(ShapeMismatchError):
        embed(annihilation(3, "A"), "A", space)


def test_adjoint_and_quadratures(space):
    a = mode_operator(space, "A")
    assert (a.dag().dag() - a).norm() < 1e-14
    x, y = quadratures(a)
    assert x.is_hermitian()
    assert y.is_hermitian()
    assert not a.is_hermitian()


def test_representation_switches_at_dense_limit():
    small = HilbertSpace.of(("A", DENSE_LIMIT - 1))
    large = HilbertSpace.of(("A", DENSE_LIMIT))
    assert not mode_operator(small, "A").is_sparse
    assert mode_operator(large, "A").is_sparse


def test_mixed_sparse_dense_arithmetic():
    large = HilbertSpace.of(("C", 2), ("A", 40))
    a = mode_operator(large, "A")
    dense = Operator(large, a.to_dense())
    assert ((a + dense) - a * 2.0).norm() < 1e-12


def test_operator_shape_checked(space):
    with pytest.raises(ShapeMismatchError):
        Operator(space, np.zeros((3, 3)))


def test_pure_and_mixed_expectations_agree(space):
    psi = QuantumState.pure(np.arange(space.total_dim) + 1j)
    n_a = mode_operator(space, "A").dag() @ mode_operator(space, "A")
    assert expectation(psi, n_a) == pytest.approx(expectation(psi.to_density(), n_a))


def test_basis_state_is_normalized(space):
    psi = basis_state(space, {"C": 1})
    psi.validate()
    assert expectation(psi, mode_operator(space, "C").dag() @ mode_operator(space, "C")).real == pytest.approx(1.0)


def test_state_validation():
    with pytest.raises(InvalidStateError):
        QuantumState.pure([0.0, 0.0])
    with pytest.raises(InvalidStateError):
        QuantumState.mixed(np.diag([1.5, -0.5])).validate()
    with pytest.raises(InvalidStateError):
        QuantumState.mixed(np.diag([0.7, 0.7])).validate()
    QuantumState.mixed(np.diag([1.4, 0.6])).normalized().validate()


def test_coherent_amplitudes():
    amps = coherent_amplitudes(30, 1.5)
    assert np.linalg.norm(amps) == pytest.approx(1.0)
    mean_n = np.sum(np.arange(30) * np.abs(amps) ** 2)
    assert mean_n == pytest.approx(1.5**2, rel=1e-6)
