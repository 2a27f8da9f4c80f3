import itertools

import numpy as np
import pytest

from qtimeopt import (
    BASIS_ORDERING_VERSION,
    GeneratorIndex,
    basis_size,
    enumerate_basis,
    expand_traceless,
    parity_of,
)


@pytest.mark.parametrize("n", [1, 2, 3, 4, 5])
def test_basis_size_closed_form(n):
    assert basis_size(n) == 3 * n + 9 * n * (n - 1) // 2


@pytest.mark.parametrize("n", [1, 2, 3])
def test_enumerate_matches_size(n):
    basis = enumerate_basis(n)
    assert basis.size == basis_size(n)
    assert basis.matrices.shape == (basis.size, 2**n, 2**n)
    assert len(basis.parity) == basis.size
    assert np.count_nonzero(basis.weight1) == 3 * n


def test_rejects_nonpositive_n():
    with pytest.raises(ValueError):
        enumerate_basis(0)


def test_ordering_is_weight1_then_weight2_lex():
    labels = enumerate_basis(2).labels()
    assert labels[:6] == ["x1", "y1", "z1", "x2", "y2", "z2"]
    assert labels[6:9] == ["x1x2", "x1y2", "x1z2"]
    assert labels[-1] == "z1z2"
    assert isinstance(BASIS_ORDERING_VERSION, str) and BASIS_ORDERING_VERSION


@pytest.mark.parametrize("n", [1, 2, 3])
def test_trace_orthonormal(n):
    basis = enumerate_basis(n)
    flat = basis.matrices.reshape(basis.size, -1)
    gram = flat.conj() @ flat.T
    assert np.allclose(gram, np.eye(basis.size), atol=1e-13)


@pytest.mark.parametrize("n", [1, 2])
def test_generators_hermitian_traceless(n):
    basis = enumerate_basis(n)
    for m in basis.matrices:
        assert np.allclose(m, m.conj().T, atol=1e-14)
        assert abs(np.trace(m)) < 1e-14


def test_parity_counts_y_factors():
    basis = enumerate_basis(2)
    for idx, par in zip(basis.entries, basis.parity):
        n_y = sum(a == "y" for a in idx.axes)
        assert par == ("antisymmetric" if n_y % 2 else "symmetric")
        assert parity_of(idx) == par


@pytest.mark.parametrize("n", [1, 2])
def test_parity_matches_matrix_reality(n):
    # even y-count generators are real matrices, odd y-count purely imaginary
    basis = enumerate_basis(n)
    for m, par in zip(basis.matrices, basis.parity):
        if par == "symmetric":
            assert np.allclose(m.imag, 0.0, atol=1e-14)
        else:
            assert np.allclose(m.real, 0.0, atol=1e-14)


def test_index_of_roundtrip():
    basis = enumerate_basis(3)
    for i, label in enumerate(basis.labels()):
        assert basis.index_of(label) == i
    with pytest.raises(KeyError):
        basis.index_of("q7")


def test_generator_index_label():
    idx = GeneratorIndex((2, 3), ("x", "z"))
    assert idx.label() == "x2z3"
    assert idx.weight == 2


@pytest.mark.parametrize("n", [1, 2, 3])
def test_expand_traceless_parseval(n):
    rng = np.random.default_rng(n)
    dim = 2**n
    a = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    a = a + a.conj().T
    a -= np.trace(a) / dim * np.eye(dim)
    exp = expand_traceless(a, n)
    total = sum(exp.weight_norms.values())
    assert total == pytest.approx(np.linalg.norm(a) ** 2, rel=1e-12)


def test_expand_traceless_recovers_basis_coefficients():
    basis = enumerate_basis(2)
    rng = np.random.default_rng(7)
    coeffs = rng.normal(size=basis.size)
    a = np.tensordot(coeffs, basis.matrices, axes=1)
    exp = expand_traceless(a, 2)
    # weights 1 and 2 carry everything for a two-qubit control Hamiltonian
    assert exp.weight_norms.get(1, 0.0) + exp.weight_norms.get(2, 0.0) == pytest.approx(
        float(coeffs @ coeffs), rel=1e-12
    )


def test_expand_traceless_guards_large_n():
    a = np.zeros((32, 32))
    with pytest.raises(ValueError):
        expand_traceless(a, 5)
    expand_traceless(a, 5, allow_large=True)
