import json
import math

import numpy as np
import pytest

from qtimeopt import (
    BASIS_ORDERING_VERSION,
    ControlField,
    T2MAX,
    TimeGrid,
    assemble_hamiltonian,
    default_slices,
    enumerate_basis,
    normalize_field,
    propagate_backward,
    propagate_forward,
    seed_random_field,
    step_propagator,
    trace_fidelity,
)


def _expm_herm(h, dt):
    vals, vecs = np.linalg.eigh(h)
    return (vecs * np.exp(-1j * vals * dt)) @ vecs.conj().T


def test_time_grid_validation():
    with pytest.raises(ValueError):
        TimeGrid(-1.0, 10)
    with pytest.raises(ValueError):
        TimeGrid(1.0, 0)
    grid = TimeGrid(2.0, 8)
    assert grid.dt == pytest.approx(0.25)
    times = grid.times()
    assert times.shape == (9,)
    assert times[0] == 0.0 and times[-1] == 2.0


def test_default_slices_scales_with_duration():
    assert default_slices(T2MAX) == 200
    assert default_slices(2.0 * T2MAX) == 400
    # short grids are floored so coarse problems stay resolved
    assert default_slices(0.01 * T2MAX) == 100
    assert default_slices(0.5 * T2MAX) == 100


@pytest.mark.parametrize("n", [1, 2])
def test_step_propagator_matches_eigen_exponential(n):
    rng = np.random.default_rng(3 + n)
    basis = enumerate_basis(n)
    coeffs = rng.normal(size=basis.size)
    h = assemble_hamiltonian(coeffs, basis)
    p = step_propagator(h, 0.37)
    assert np.allclose(p, _expm_herm(h, 0.37), atol=1e-12)
    assert np.allclose(p @ p.conj().T, np.eye(2**n), atol=1e-12)


def test_assemble_hamiltonian_is_linear_and_hermitian():
    basis = enumerate_basis(2)
    rng = np.random.default_rng(11)
    c1, c2 = rng.normal(size=(2, basis.size))
    h = assemble_hamiltonian(c1 + 2.0 * c2, basis)
    assert np.allclose(
        h, assemble_hamiltonian(c1, basis) + 2.0 * assemble_hamiltonian(c2, basis)
    )
    assert np.allclose(h, h.conj().T, atol=1e-14)


def test_propagate_forward_constant_field_closed_form():
    basis = enumerate_basis(1)
    grid = TimeGrid(1.3, 64)
    raw = np.tile([1.0, 2.0, -0.5], (grid.slices, 1))
    field = normalize_field(grid, raw, basis)
    traj = propagate_forward(field, basis)
    assert np.allclose(traj.matrices[0], np.eye(2), atol=1e-15)
    h = assemble_hamiltonian(field.values[0], basis)
    assert np.allclose(traj.final, _expm_herm(h, 1.3), atol=1e-11)
    for u in traj.matrices[:: 16]:
        assert np.allclose(u @ u.conj().T, np.eye(2), atol=1e-12)


def test_propagate_backward_inverts_forward():
    basis = enumerate_basis(2)
    grid = TimeGrid(0.9, 40)
    field = seed_random_field(grid, basis, rng_seed=5)
    fwd = propagate_forward(field, basis)
    back = propagate_backward(fwd.final, field, basis)
    assert np.allclose(back.matrices, fwd.matrices, atol=1e-12)


def test_normalize_field_puts_slices_on_sphere():
    basis = enumerate_basis(2)
    grid = TimeGrid(1.0, 5)
    rng = np.random.default_rng(0)
    field = normalize_field(grid, rng.normal(size=(5, basis.size)), basis)
    assert np.allclose(field.slice_norms(), 2.0, atol=1e-13)
    field.check_normalization(basis.dim)
    with pytest.raises(ValueError):
        normalize_field(grid, np.zeros((5, basis.size)), basis)


def test_control_field_rejects_constraint_violation():
    basis = enumerate_basis(1)
    grid = TimeGrid(1.0, 4)
    good = seed_random_field(grid, basis, rng_seed=1)
    bad = ControlField(grid, 1.5 * good.values, good.omega)
    with pytest.raises(ValueError):
        bad.check_normalization(basis.dim)


def test_seed_random_field_deterministic():
    basis = enumerate_basis(1)
    grid = TimeGrid(1.0, 12)
    f1 = seed_random_field(grid, basis, rng_seed=42)
    f2 = seed_random_field(grid, basis, rng_seed=42)
    f3 = seed_random_field(grid, basis, rng_seed=43)
    assert np.array_equal(f1.values, f2.values)
    assert not np.array_equal(f1.values, f3.values)
    assert np.allclose(f1.slice_norms(), math.sqrt(2), atol=1e-13)


def test_field_save_load_roundtrip(tmp_path):
    basis = enumerate_basis(2)
    grid = TimeGrid(0.7, 9)
    field = seed_random_field(grid, basis, rng_seed=9)
    base = tmp_path / "field"
    field.save(base, 2)
    loaded, n = ControlField.load(base)
    assert n == 2
    assert np.array_equal(loaded.values, field.values)
    assert loaded.grid == field.grid
    assert loaded.omega == field.omega


def test_field_load_rejects_other_ordering(tmp_path):
    basis = enumerate_basis(1)
    field = seed_random_field(TimeGrid(0.5, 3), basis, rng_seed=2)
    base = tmp_path / "field"
    field.save(base, 1)
    meta = json.loads((base.with_suffix(".json")).read_text())
    meta["basis_ordering"] = "something-else/9"
    base.with_suffix(".json").write_text(json.dumps(meta))
    with pytest.raises(ValueError, match="ordering"):
        ControlField.load(base)
    assert BASIS_ORDERING_VERSION != "something-else/9"


def test_trace_fidelity_properties():
    rng = np.random.default_rng(4)
    a = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
    q, _ = np.linalg.qr(a)
    assert trace_fidelity(q, q) == pytest.approx(1.0, abs=1e-14)
    assert trace_fidelity(q, np.exp(0.77j) * q) == pytest.approx(1.0, abs=1e-14)
    b = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
    p, _ = np.linalg.qr(b)
    f = trace_fidelity(q, p)
    assert 0.0 <= f <= 1.0
