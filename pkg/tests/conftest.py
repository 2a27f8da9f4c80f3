"""Shared fixtures: generator tables and a few converged reference runs.

The solver runs here are deliberately small but real; they are shared
session-wide because several test modules interrogate the same
converged solution from different angles (multiplier constancy,
one-qubit constancy, reflection symmetry, costate consistency).  Grid
sizes, durations, and seeds were chosen so every run converges with a
comfortable cycle margin while keeping the whole suite in the
minutes range.
"""

import pytest

from qtimeopt import (
    ConvergenceCriteria,
    GeneratorTable,
    T2MAX,
    TimeGrid,
    asym_unitary,
    qft_unitary,
    solve,
    target_by_name,
)


@pytest.fixture(scope="session")
def basis1():
    return GeneratorTable(1)


@pytest.fixture(scope="session")
def basis2():
    return GeneratorTable(2)


@pytest.fixture(scope="session")
def basis3():
    return GeneratorTable(3)


@pytest.fixture(scope="session")
def w1_run(basis1):
    """Converged one-qubit run, duration safely above the optimum."""
    grid = TimeGrid(0.85 * T2MAX, 40)
    crit = ConvergenceCriteria(max_cycles=5000, fidelity_tol=1e-9)
    res = solve(target_by_name("w", 1).matrix, grid, basis1, seed=3, criteria=crit)
    assert res.converged
    return res


@pytest.fixture(scope="session")
def qft2_run(basis2):
    """Converged two-qubit transform run just above its optimal time."""
    grid = TimeGrid(0.72 * T2MAX, 144)
    crit = ConvergenceCriteria(max_cycles=4000, fidelity_tol=1e-9)
    res = solve(qft_unitary(2), grid, basis2, seed=0, criteria=crit)
    assert res.converged
    return res


@pytest.fixture(scope="session")
def asym2_run(basis2):
    grid = TimeGrid(0.61 * T2MAX, 122)
    crit = ConvergenceCriteria(max_cycles=4000, fidelity_tol=1e-9)
    res = solve(asym_unitary(2), grid, basis2, seed=0, criteria=crit)
    assert res.converged
    return res


@pytest.fixture(scope="session")
def qft3_run(basis3):
    grid = TimeGrid(1.50 * T2MAX, 290)
    crit = ConvergenceCriteria(max_cycles=4000, fidelity_tol=1e-9)
    res = solve(qft_unitary(3), grid, basis3, seed=1, criteria=crit)
    assert res.converged
    return res


@pytest.fixture(scope="session")
def asym3_run(basis3):
    """The slowest fixture (about two minutes); shared by the multiplier,
    one-qubit-constancy, and reflection-symmetry checks."""
    grid = TimeGrid(1.02 * T2MAX, 204)
    crit = ConvergenceCriteria(max_cycles=20000, fidelity_tol=1e-8)
    res = solve(asym_unitary(3), grid, basis3, seed=2, criteria=crit)
    assert res.converged
    return res
