"""Structural checks on solver output.

Converged solutions carry more structure than a high fidelity: the
norm multiplier is constant in time, the one-qubit part of the
Hamiltonian is constant, symmetric-target solutions are (anti)symmetric
under time reversal component by component, and the costate pairing

    F(t) = U(t) V(t)^dag + V(t) U(t)^dag

obeys i dF/dt = [H, F] with its one- and two-qubit projections tied to
the control law Tr(tau_a F) = lambda h_a.  Everything here evaluates
those statements on a finished run and reports residuals; tolerances
are the caller's business (the defaults match what well-converged runs
achieve with margin).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .exceptions import DecompositionInconsistencyError, DegenerateRecordError
from .krotov import KrotovState
from .pauli import GeneratorTable, _full_strings
from .propagation import ControlField, UnitaryTrajectory

__all__ = [
    "lambda_constancy",
    "ConstancyReport",
    "one_qubit_constancy",
    "SymmetryReport",
    "time_reversal_residual",
    "time_reverse_solution",
    "costate_overlap",
    "costate_commutator_residual",
    "GradedReport",
    "graded_residual",
]


def lambda_constancy(lambda_record) -> float:
    """Relative spread (population std over |mean|) of the multiplier.

    Converged runs show values well under 1e-3; a near-zero mean means
    the record never left the degenerate regime and the ratio would be
    meaningless, hence the error.
    """
    lam = np.asarray(lambda_record, dtype=float)
    if lam.size == 0:
        raise ValueError("empty multiplier record")
    mean = lam.mean()
    if abs(mean) < 1e-14:
        raise DegenerateRecordError("multiplier record has (near-)zero mean")
    return float(lam.std() / abs(mean))


@dataclass
class ConstancyReport:
    """Temporal ranges of the one-qubit control components.

    ``aggregate`` is the largest range over the weight-1 generators;
    ``relative`` rescales it by sqrt(N)*omega, the norm of the whole
    control vector, which is the scale the pass thresholds refer to.
    """

    per_generator: dict[str, float]
    aggregate: float
    relative: float


def one_qubit_constancy(field: ControlField, basis: GeneratorTable) -> ConstancyReport:
    """Max over weight-1 generators of the temporal range of h_a."""
    labels = basis.labels()
    h = field.values
    ranges = {}
    for a in np.flatnonzero(basis.weight1):
        col = h[:, a]
        ranges[labels[a]] = float(col.max() - col.min())
    aggregate = max(ranges.values())
    scale = math.sqrt(basis.dim) * field.omega
    return ConstancyReport(ranges, aggregate, aggregate / scale)


def _parity_signs(basis: GeneratorTable) -> np.ndarray:
    return np.where(basis.symmetric, 1.0, -1.0)


def _group_key(weight: int, symmetric: bool) -> str:
    return f"{weight}{'s' if symmetric else 'a'}"


@dataclass
class SymmetryReport:
    """Per-generator reflection residuals and their group maxima.

    Groups split by weight and parity ("1s", "1a", "2s", "2a");
    ``aggregates`` holds the max |residual| over each group, ``relative``
    the overall max rescaled by sqrt(N)*omega, and ``passed`` compares
    that against ``tolerance``.
    """

    residuals: dict[str, np.ndarray]
    aggregates: dict[str, float]
    relative: float
    tolerance: float
    passed: bool


def time_reversal_residual(
    field: ControlField, basis: GeneratorTable, tolerance: float = 5e-2
) -> SymmetryReport:
    """Residual of h under the reflection t -> T - t.

    Slice m pairs with slice M-1-m exactly (no interpolation; the
    pairing is exact for even and odd M alike).  Components of
    symmetric generators should be even about the midpoint, those of
    antisymmetric generators odd, so the residual is h - s * reversed(h)
    with s the parity sign.
    """
    h = field.values
    signs = _parity_signs(basis)
    res = h - signs[None, :] * h[::-1, :]
    labels = basis.labels()
    residuals = {labels[a]: res[:, a].copy() for a in range(basis.size)}
    aggregates: dict[str, float] = {}
    for a in range(basis.size):
        key = _group_key(int(basis.weight[a]), bool(basis.symmetric[a]))
        val = float(np.abs(res[:, a]).max())
        aggregates[key] = max(aggregates.get(key, 0.0), val)
    scale = math.sqrt(basis.dim) * field.omega
    relative = max(aggregates.values()) / scale
    return SymmetryReport(residuals, aggregates, relative, tolerance, relative < tolerance)


def time_reverse_solution(
    u_traj: UnitaryTrajectory,
    v_traj: UnitaryTrajectory,
    field: ControlField,
    lambda_record: np.ndarray,
    basis: GeneratorTable,
) -> tuple[UnitaryTrajectory, UnitaryTrajectory, ControlField, np.ndarray]:
    """Map a solution to its time-reversed partner.

    U_rev(t) = U*(T-t) U(T)^T,  V_rev(t) = V*(T-t) U(T)^T,
    H_rev(t) = H*(T-t)  (components pick up the parity sign, since
    conjugation fixes the real generators and flips the imaginary
    ones), and the multiplier record is reflected.  The reversed tuple
    drives to the transpose of the original final unitary; applying the
    map twice returns the input exactly.
    """
    u = u_traj.matrices
    v = v_traj.matrices
    if u.shape != v.shape:
        raise ValueError("trajectories live on different grids")
    right = u[-1].T.copy()
    u_rev = np.conj(u[::-1]) @ right
    v_rev = np.conj(v[::-1]) @ right
    signs = _parity_signs(basis)
    field_rev = ControlField(
        field.grid, field.values[::-1, :] * signs[None, :], field.omega
    )
    lam_rev = np.asarray(lambda_record, dtype=float)[::-1].copy()
    return (
        UnitaryTrajectory(u_rev),
        UnitaryTrajectory(v_rev),
        field_rev,
        lam_rev,
    )


def costate_overlap(u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Hermitian pairing U V^dag + V U^dag (also works on stacks)."""
    a = u @ np.conj(np.swapaxes(v, -1, -2))
    return a + np.conj(np.swapaxes(a, -1, -2))


def costate_commutator_residual(state: KrotovState, basis: GeneratorTable) -> float:
    """Central-difference check of i dF/dt = [H, F] along a run.

    F is evaluated at the grid nodes, H on the slice to the right of
    each interior node; the one-sided sampling of H makes the residual
    first order in dt whenever H actually varies in time, so halving dt
    should halve the number.  Returns the max over interior nodes of
    the largest matrix entry of the defect.
    """
    if state.v_traj is None:
        raise ValueError("state carries no costate trajectory; run the solver first")
    grid = state.field.grid
    if grid.slices < 3:
        raise ValueError("need at least 3 slices for a central difference")
    u = state.u_traj.matrices
    v = state.v_traj.matrices
    f = costate_overlap(u, v)
    n = basis.dim
    m = grid.slices
    ham = (state.field.values @ basis.flat).reshape(m, n, n)
    deriv = (f[2:] - f[:-2]) / (2.0 * grid.dt)
    h_mid = ham[1:]
    f_mid = f[1:-1]
    flow = -1j * (h_mid @ f_mid - f_mid @ h_mid)
    return float(np.abs(deriv - flow).max())


@dataclass
class GradedReport:
    """Weight-resolved consistency of the costate pairing.

    ``projection_leakage``: worst gap between the weight-(1,2)
    coefficients of F at a slice's left node and lambda * h for that
    slice (zero at a self-consistent fixed point of the update rule).
    ``weight1_rate``: max Frobenius norm of the central-difference time
    derivative of the one-qubit part of H, which vanishes for exact
    solutions.  ``weight2_mismatch``: max Frobenius norm of
    i*lambda*dH2/dt - P2[H2, F3]; for n = 2 no weight-3 operators
    exist, so this reduces to the constancy of the two-qubit part.
    """

    projection_leakage: float
    weight1_rate: float
    weight2_mismatch: float


def graded_residual(
    state: KrotovState, basis: GeneratorTable, leak_tol: float = 1e-6
) -> GradedReport:
    """Evaluate the low-weight evolution equations on a converged run.

    Writes F = lambda H + (rest): the weight-(1,2) content of F must be
    exactly lambda h (the control law), the one-qubit part of H must be
    (numerically) constant, and the two-qubit part evolves only through
    the commutator with the weight-3 content of F.  A leakage beyond
    ``leak_tol`` means the state is not a stationary point of the
    update rule and the other residuals would be meaningless, so it
    raises instead of reporting.
    """
    if state.v_traj is None:
        raise ValueError("state carries no costate trajectory; run the solver first")
    if basis.n > 4:
        raise ValueError("full operator expansion is limited to n <= 4")
    grid = state.field.grid
    m, n = grid.slices, basis.dim
    if m < 3:
        raise ValueError("need at least 3 slices for a central difference")
    u = state.u_traj.matrices
    v = state.v_traj.matrices
    f_nodes = costate_overlap(u, v)

    # Control-law consistency at each slice's left node.
    coeffs = (basis.flat_conj @ f_nodes[:-1].reshape(m, -1).T).T.real
    expected = state.lambda_record[:, None] * state.field.values
    leakage = float(np.abs(coeffs - expected).max())
    if leakage > leak_tol:
        raise DecompositionInconsistencyError(
            f"weight-(1,2) content of the costate pairing deviates from "
            f"lambda*h by {leakage:.3e} (> {leak_tol:g}); state is not converged"
        )

    h1 = (state.field.values * basis.weight1[None, :]) @ basis.flat
    h1 = h1.reshape(m, n, n)
    w2 = ~basis.weight1
    h2 = (state.field.values * w2[None, :]) @ basis.flat
    h2 = h2.reshape(m, n, n)
    dt = grid.dt

    d1 = (h1[2:] - h1[:-2]) / (2.0 * dt)
    weight1_rate = float(np.sqrt((np.abs(d1) ** 2).sum(axis=(1, 2))).max())

    if basis.n >= 3:
        _, weights_full, flat_full = _full_strings(basis.n)
        sel3 = weights_full == 3
        flat3 = flat_full[sel3]
        coef3 = (flat3.conj() @ f_nodes[:-1].reshape(m, -1).T).T
        f3 = (coef3 @ flat3).reshape(m, n, n)
    else:
        f3 = np.zeros((m, n, n), dtype=complex)
    comm = h2 @ f3 - f3 @ h2
    flat2 = basis.flat[basis.weight == 2]
    if flat2.size:
        coef_c = (flat2.conj() @ comm.reshape(m, -1).T).T
        comm2 = (coef_c @ flat2).reshape(m, n, n)
    else:
        comm2 = np.zeros_like(comm)
    d2 = (h2[2:] - h2[:-2]) / (2.0 * dt)
    lam_mid = state.lambda_record[1:-1, None, None]
    mis = 1j * lam_mid * d2 - comm2[1:-1]
    weight2_mismatch = float(np.sqrt((np.abs(mis) ** 2).sum(axis=(1, 2))).max())
    return GradedReport(leakage, weight1_rate, weight2_mismatch)
