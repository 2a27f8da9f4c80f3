"""Benchmark target unitaries and exact minimal gate times.

Provides the quantum Fourier transform, an asymmetric dense benchmark
unitary built by explicit orthogonalization, the elementary gates of the
standard QFT circuit, and the closed-form minimal implementation time
for arbitrary one- and two-qubit gates under the normalized-control
constraint (slice norm sqrt(N) * omega).
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .units import OMEGA, T2MAX

__all__ = [
    "TargetUnitary",
    "GateSpec",
    "qft_unitary",
    "asym_unitary",
    "gate_matrix",
    "primitive_matrix",
    "qft_gate_sequence",
    "compile_sequence",
    "two_qubit_optimal_time",
    "sequence_time_cost",
    "qft_time_upper_bound",
    "target_by_name",
]

_INV_SQRT2 = 1.0 / math.sqrt(2.0)

#: Walsh-Hadamard gate, (sigma_x + sigma_z) / sqrt(2).
W_GATE = np.array([[1, 1], [1, -1]], dtype=complex) * _INV_SQRT2


@dataclass(frozen=True)
class TargetUnitary:
    label: str
    n: int
    matrix: np.ndarray = field(repr=False, hash=False, compare=False)

    @property
    def dim(self) -> int:
        return 2**self.n


def qft_unitary(n: int) -> np.ndarray:
    """Discrete Fourier transform on n qubits:
    entry (k, x) = exp(2 pi i k x / N) / sqrt(N)."""
    if n < 1:
        raise ValueError("need at least one qubit")
    N = 2**n
    idx = np.arange(N)
    return np.exp(2j * np.pi * np.outer(idx, idx) / N) / math.sqrt(N)


def asym_unitary(n: int) -> np.ndarray:
    """Dense benchmark unitary with no special symmetry, dimension 2**n.

    Column 0 is the normalized vector of alpha_k = (k+1)**(1/3) *
    exp(i sqrt(k)); column j >= 1 keeps alpha_0..alpha_{j-1}, replaces
    entry j by the unique beta_j orthogonalizing it against column 0,
    and zeroes the rest.  With beta_j = -(sum_{i<j} |alpha_i|**2) /
    conj(alpha_j) all columns are mutually orthogonal, so normalizing
    each column gives a unitary matrix.
    """
    if n < 1:
        raise ValueError("need at least one qubit")
    N = 2**n
    k = np.arange(N)
    alpha = (k + 1.0) ** (1.0 / 3.0) * np.exp(1j * np.sqrt(k))
    out = np.zeros((N, N), dtype=complex)
    out[:, 0] = alpha / np.linalg.norm(alpha)
    cum = np.cumsum(np.abs(alpha) ** 2)
    for j in range(1, N):
        col = np.zeros(N, dtype=complex)
        col[:j] = alpha[:j]
        col[j] = -cum[j - 1] / np.conj(alpha[j])
        out[:, j] = col / np.linalg.norm(col)
    return out


@dataclass(frozen=True)
class GateSpec:
    """One elementary gate of a circuit.

    kind is one of:
      "hadamard" - Walsh-Hadamard on qubits[0]
      "phase"    - controlled phase exp(2 pi i / 2**level) on
                   qubits = (target, control)
      "swap"     - exchange of qubits[0] and qubits[1]
      "cnot"     - qubits = (control, target)
    Qubit positions are 1-based; qubit 1 is the most significant bit.
    """

    kind: str
    qubits: tuple[int, ...]
    level: int | None = None

    def __post_init__(self):
        expected = {"hadamard": 1, "phase": 2, "swap": 2, "cnot": 2}
        if self.kind not in expected:
            raise ValueError(f"unknown gate kind {self.kind!r}")
        if len(self.qubits) != expected[self.kind]:
            raise ValueError(f"{self.kind} takes {expected[self.kind]} qubit(s)")
        if len(set(self.qubits)) != len(self.qubits):
            raise ValueError("gate qubits must be distinct")
        if (self.kind == "phase") != (self.level is not None):
            raise ValueError("level is required exactly for phase gates")
        if self.kind == "phase" and self.level < 1:
            raise ValueError("phase level must be >= 1")

    def to_json(self) -> dict:
        d = {"kind": self.kind, "qubits": list(self.qubits)}
        if self.level is not None:
            d["level"] = self.level
        return d

    @classmethod
    def from_json(cls, d: dict) -> "GateSpec":
        return cls(d["kind"], tuple(d["qubits"]), d.get("level"))


def _bit(x: int, q: int, n: int) -> int:
    return (x >> (n - q)) & 1


def gate_matrix(spec: GateSpec, n: int) -> np.ndarray:
    """Embed ``spec`` into the full 2**n-dimensional space."""
    if any(q < 1 or q > n for q in spec.qubits):
        raise ValueError(f"gate qubits {spec.qubits} outside 1..{n}")
    N = 2**n
    if spec.kind == "hadamard":
        (j,) = spec.qubits
        out = np.array([[1.0 + 0j]])
        for q in range(1, n + 1):
            out = np.kron(out, W_GATE if q == j else np.eye(2))
        return out
    if spec.kind == "phase":
        target, control = spec.qubits
        phase = np.exp(2j * np.pi / 2**spec.level)
        diag = np.ones(N, dtype=complex)
        for x in range(N):
            if _bit(x, target, n) and _bit(x, control, n):
                diag[x] = phase
        return np.diag(diag)
    # The remaining kinds are bit permutations.
    out = np.zeros((N, N), dtype=complex)
    if spec.kind == "swap":
        j, k = spec.qubits
        for x in range(N):
            bj, bk = _bit(x, j, n), _bit(x, k, n)
            y = x & ~(1 << (n - j)) & ~(1 << (n - k))
            y |= bk << (n - j)
            y |= bj << (n - k)
            out[y, x] = 1.0
    else:  # cnot
        control, target = spec.qubits
        for x in range(N):
            y = x ^ (1 << (n - target)) if _bit(x, control, n) else x
            out[y, x] = 1.0
    return out


def primitive_matrix(spec: GateSpec) -> np.ndarray:
    """The gate on its own support: 2x2 for hadamard, else 4x4."""
    if spec.kind == "hadamard":
        return W_GATE.copy()
    canonical = GateSpec(spec.kind, (1, 2), spec.level)
    return gate_matrix(canonical, 2)


def qft_gate_sequence(n: int) -> list[GateSpec]:
    """Standard QFT circuit, in the order the gates are applied.

    For target qubit q = 1..n: a Hadamard on q, then controlled phases
    of level l = 2..(n - q + 1) with control q + l - 1; finally the
    floor(n/2) bit-reversal swaps.  Total gate count
    n (n + 1) / 2 + floor(n / 2).
    """
    if n < 1:
        raise ValueError("need at least one qubit")
    seq: list[GateSpec] = []
    for q in range(1, n + 1):
        seq.append(GateSpec("hadamard", (q,)))
        for level in range(2, n - q + 2):
            seq.append(GateSpec("phase", (q, q + level - 1), level))
    for j in range(1, n // 2 + 1):
        seq.append(GateSpec("swap", (j, n + 1 - j)))
    return seq


def compile_sequence(seq: list[GateSpec], n: int) -> np.ndarray:
    """Product of the gates in application order (first gate rightmost)."""
    out = np.eye(2**n, dtype=complex)
    for g in seq:
        out = gate_matrix(g, n) @ out
    return out


def two_qubit_optimal_time(
    u: np.ndarray, omega: float = OMEGA, m_range: int = 2
) -> float:
    """Exact minimal time to realize a one- or two-qubit unitary.

    The target's eigenphases theta_j (a 2x2 input is embedded as
    U (x) 1, doubling each eigenphase) enter

        T = (1 / 2 omega) * sqrt( min sum_j (theta_j + 2 pi m_j - chi)**2 )

    minimized over integer shifts m_j and the free global phase chi.
    For fixed shifts the optimal chi is the mean, so the minimization
    scans m in {-m_range..m_range}**4.  The default window suffices for
    principal-branch eigenphases; widen it to double-check.
    """
    u = np.asarray(u, dtype=complex)
    if u.shape == (2, 2):
        u = np.kron(u, np.eye(2))
    if u.shape != (4, 4):
        raise ValueError("expected a 2x2 or 4x4 unitary")
    if np.abs(u.conj().T @ u - np.eye(4)).max() > 1e-9:
        raise ValueError("input is not unitary within tolerance")
    theta = np.angle(np.linalg.eigvals(u))
    best = math.inf
    shifts = range(-m_range, m_range + 1)
    for m in itertools.product(shifts, repeat=4):
        phi = theta + 2.0 * np.pi * np.array(m)
        chi = phi.mean()
        best = min(best, float(np.sum((phi - chi) ** 2)))
    return math.sqrt(best) / (2.0 * omega)


def sequence_time_cost(seq: list[GateSpec], omega: float = OMEGA) -> float:
    """Sum of exact minimal times of the gates in ``seq``."""
    return sum(two_qubit_optimal_time(primitive_matrix(g), omega) for g in seq)


def qft_time_upper_bound(n: int, omega: float = OMEGA) -> float:
    """Closed-form total time of the standard QFT circuit.

    Equals sequence_time_cost(qft_gate_sequence(n)):
    T2MAX * (2 n / sqrt(5) + sqrt(3/5) * (n - 2 + 2**(1-n) + floor(n/2))).
    """
    if n < 1:
        raise ValueError("need at least one qubit")
    units = 2.0 * n / math.sqrt(5.0) + math.sqrt(0.6) * (
        n - 2.0 + 2.0 ** (1 - n) + n // 2
    )
    return units * T2MAX / omega


def target_by_name(name: str, n: int) -> TargetUnitary:
    """Look up a named benchmark target ("qft", "asym", "w", "cnot", "swap")."""
    name = name.lower()
    if name == "qft":
        return TargetUnitary("qft", n, qft_unitary(n))
    if name == "asym":
        return TargetUnitary("asym", n, asym_unitary(n))
    if name == "w":
        if n != 1:
            raise ValueError("target 'w' is a single-qubit gate")
        return TargetUnitary("w", 1, W_GATE.copy())
    if name in ("cnot", "swap"):
        if n != 2:
            raise ValueError(f"target {name!r} is a two-qubit gate")
        return TargetUnitary(name, 2, gate_matrix(GateSpec(name, (1, 2)), 2))
    raise ValueError(f"unknown target {name!r}")
