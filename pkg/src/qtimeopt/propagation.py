"""Piecewise-constant propagation of the controlled Schrodinger equation.

A control field is a real (M, K) array: M time slices, K coefficients in
the canonical generator order.  On every slice the squared coefficients
sum to N * omega**2, which fixes the Frobenius norm of the Hamiltonian

    H(t) = sum_a h_a(t) tau_a,      Tr(H**2) = sum_a h_a(t)**2.

Each slice is propagated exactly through the spectral decomposition of
its Hamiltonian; products of the resulting unitaries are unconditionally
unitary, and the only discretization error is the piecewise-constant
representation of the field itself (second order in dt for smooth
fields sampled at slice midpoints).
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .pauli import BASIS_ORDERING_VERSION, GeneratorTable, enumerate_basis
from .units import OMEGA, T2MAX

__all__ = [
    "TimeGrid",
    "ControlField",
    "UnitaryTrajectory",
    "default_slices",
    "normalize_field",
    "assemble_hamiltonian",
    "step_propagator",
    "propagate_forward",
    "propagate_backward",
    "trace_fidelity",
]


def default_slices(t_total: float) -> int:
    """Default slice count: max(100, ceil(200 * T / T2MAX))."""
    return max(100, math.ceil(200.0 * t_total / T2MAX))


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid with M slices covering [0, T]; grid points 0..M."""

    t_total: float
    slices: int

    def __post_init__(self):
        if self.t_total <= 0:
            raise ValueError("total time must be positive")
        if self.slices < 1:
            raise ValueError("need at least one slice")

    @property
    def dt(self) -> float:
        return self.t_total / self.slices

    def times(self) -> np.ndarray:
        """Grid-point times, shape (M + 1,)."""
        return np.linspace(0.0, self.t_total, self.slices + 1)


@dataclass
class ControlField:
    """Piecewise-constant control coefficients on a time grid.

    values[m, a] is the coefficient of generator a on slice m
    (the interval [m*dt, (m+1)*dt)).
    """

    grid: TimeGrid
    values: np.ndarray
    omega: float = OMEGA

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 2 or self.values.shape[0] != self.grid.slices:
            raise ValueError("values must have shape (slices, K)")

    @property
    def n_coefficients(self) -> int:
        return self.values.shape[1]

    def slice_norms(self) -> np.ndarray:
        return np.sqrt(np.sum(self.values**2, axis=1))

    def check_normalization(self, dim: int, tol: float = 1e-9) -> None:
        """Raise unless every slice satisfies sum h**2 = N * omega**2."""
        target = math.sqrt(dim) * self.omega
        worst = np.abs(self.slice_norms() - target).max()
        if worst > tol * target:
            raise ValueError(
                f"field violates the norm constraint by {worst:.3e} "
                f"(target slice norm {target:.6f})"
            )

    def copy(self) -> "ControlField":
        return ControlField(self.grid, self.values.copy(), self.omega)

    # -- serialization ------------------------------------------------------

    def save(self, base: str | Path, n: int) -> tuple[Path, Path]:
        """Write ``<base>.csv`` (slice index + K coefficient columns in
        canonical order) and ``<base>.json`` (grid and basis metadata)."""
        base = Path(base)
        basis = enumerate_basis(n)
        if basis.size != self.n_coefficients:
            raise ValueError(
                f"field has {self.n_coefficients} coefficients but the "
                f"n={n} basis has {basis.size}"
            )
        csv_path = base.with_suffix(".csv")
        json_path = base.with_suffix(".json")
        with open(csv_path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["slice"] + basis.labels())
            for m in range(self.grid.slices):
                writer.writerow([m] + [repr(float(v)) for v in self.values[m]])
        header = {
            "n": n,
            "T": self.grid.t_total,
            "M": self.grid.slices,
            "omega": self.omega,
            "basis_ordering": BASIS_ORDERING_VERSION,
        }
        json_path.write_text(json.dumps(header, indent=1, sort_keys=True))
        return csv_path, json_path

    @classmethod
    def load(cls, base: str | Path) -> tuple["ControlField", int]:
        """Read a field written by :meth:`save`; returns (field, n)."""
        base = Path(base)
        header = json.loads(base.with_suffix(".json").read_text())
        if header["basis_ordering"] != BASIS_ORDERING_VERSION:
            raise ValueError(
                f"field was written under basis ordering "
                f"{header['basis_ordering']!r}; this build uses "
                f"{BASIS_ORDERING_VERSION!r}"
            )
        n = int(header["n"])
        grid = TimeGrid(float(header["T"]), int(header["M"]))
        basis = enumerate_basis(n)
        values = np.empty((grid.slices, basis.size))
        with open(base.with_suffix(".csv"), newline="") as fh:
            reader = csv.reader(fh)
            columns = next(reader)
            if columns != ["slice"] + basis.labels():
                raise ValueError("field CSV columns do not match the basis order")
            for row in reader:
                values[int(row[0])] = [float(v) for v in row[1:]]
        return cls(grid, values, float(header["omega"])), n


def normalize_field(
    grid: TimeGrid, raw: np.ndarray, basis: GeneratorTable, omega: float = OMEGA
) -> ControlField:
    """Rescale every slice of ``raw`` onto the sphere of radius
    sqrt(N) * omega.  A numerically zero slice has no direction to keep
    and is rejected."""
    raw = np.asarray(raw, dtype=float)
    if raw.shape != (grid.slices, basis.size):
        raise ValueError(f"expected raw shape {(grid.slices, basis.size)}")
    norms = np.sqrt(np.sum(raw**2, axis=1))
    if np.any(norms < 1e-12 * math.sqrt(basis.dim) * omega):
        raise ValueError("cannot normalize a (numerically) zero slice")
    target = math.sqrt(basis.dim) * omega
    return ControlField(grid, raw * (target / norms)[:, None], omega)


def assemble_hamiltonian(coefficients: np.ndarray, basis: GeneratorTable) -> np.ndarray:
    """H = sum_a h_a tau_a for one slice's coefficient vector."""
    coefficients = np.asarray(coefficients, dtype=float)
    if coefficients.shape != (basis.size,):
        raise ValueError(f"expected {basis.size} coefficients")
    return (coefficients @ basis.flat).reshape(basis.dim, basis.dim)


def step_propagator(hamiltonian: np.ndarray, dt: float, tol: float = 1e-10) -> np.ndarray:
    """exp(-i H dt) through the spectral decomposition of Hermitian H."""
    h = np.asarray(hamiltonian, dtype=complex)
    scale = max(1.0, float(np.abs(h).max()))
    if np.abs(h - h.conj().T).max() > tol * scale:
        raise ValueError("Hamiltonian is not Hermitian within tolerance")
    w, q = np.linalg.eigh(h)
    return (q * np.exp(-1j * dt * w)) @ q.conj().T


@dataclass
class UnitaryTrajectory:
    """Operator trajectory on the grid points 0..M (shape (M+1, N, N))."""

    matrices: np.ndarray

    def __post_init__(self):
        self.matrices = np.asarray(self.matrices, dtype=complex)
        if self.matrices.ndim != 3 or self.matrices.shape[1] != self.matrices.shape[2]:
            raise ValueError("expected a stack of square matrices")

    def __len__(self) -> int:
        return self.matrices.shape[0]

    @property
    def final(self) -> np.ndarray:
        return self.matrices[-1]

    def unitarity_defect(self) -> float:
        """max_m || U_m^dag U_m - 1 ||_max; zero for exactly unitary stacks."""
        eye = np.eye(self.matrices.shape[1])
        return max(
            float(np.abs(u.conj().T @ u - eye).max()) for u in self.matrices
        )


def _slice_propagators(field: ControlField, basis: GeneratorTable, sign: float):
    """Yield exp(sign * i H_m dt) slice by slice (sign=-1 is forward)."""
    dt = field.grid.dt
    for m in range(field.grid.slices):
        h = assemble_hamiltonian(field.values[m], basis)
        w, q = np.linalg.eigh(h)
        yield (q * np.exp(sign * 1j * dt * w)) @ q.conj().T


def propagate_forward(field: ControlField, basis: GeneratorTable) -> UnitaryTrajectory:
    """Solve i dU/dt = H U from U(0) = 1 over the whole grid."""
    n_pts = field.grid.slices + 1
    out = np.empty((n_pts, basis.dim, basis.dim), dtype=complex)
    out[0] = np.eye(basis.dim)
    for m, p in enumerate(_slice_propagators(field, basis, -1.0)):
        out[m + 1] = p @ out[m]
    return UnitaryTrajectory(out)


def propagate_backward(
    v_final: np.ndarray, field: ControlField, basis: GeneratorTable
) -> UnitaryTrajectory:
    """Solve i dV/dt = H V backward from V(T) = ``v_final``.

    Returns the whole trajectory; entry M equals ``v_final`` and entry m
    is exp(+i H_m dt) V_{m+1}.  Backward propagation of a forward result
    reproduces it up to rounding."""
    v_final = np.asarray(v_final, dtype=complex)
    if v_final.shape != (basis.dim, basis.dim):
        raise ValueError(f"expected a {basis.dim}x{basis.dim} terminal matrix")
    n_pts = field.grid.slices + 1
    out = np.empty((n_pts, basis.dim, basis.dim), dtype=complex)
    out[-1] = v_final
    steps = list(_slice_propagators(field, basis, +1.0))
    for m in range(field.grid.slices - 1, -1, -1):
        out[m] = steps[m] @ out[m + 1]
    return UnitaryTrajectory(out)


def trace_fidelity(u: np.ndarray, u_target: np.ndarray) -> float:
    """|Tr(U^dag U_target)| / N, phase-insensitive, in [0, 1] for unitaries."""
    u = np.asarray(u)
    n = u.shape[0]
    return float(abs(np.trace(u.conj().T @ u_target)) / n)
