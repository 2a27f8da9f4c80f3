"""Normalized one- and two-body Pauli control basis.

The controllable interactions are single-qubit Pauli operators and
two-qubit Pauli-Pauli couplings, each divided by sqrt(N) (N = 2**n) so
that the basis is orthonormal under the trace inner product:

    Tr(tau_a tau_b) = delta_ab.

Ordering is part of the on-disk format and must stay stable: all
weight-1 entries first (lexicographic in qubit position, then axis
x < y < z), then all weight-2 entries (qubit pairs j < k lexicographic,
then the 9 axis pairs lexicographic).  ``BASIS_ORDERING_VERSION`` is
embedded in serialized fields so that a reader can refuse data written
under a different convention.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

__all__ = [
    "BASIS_ORDERING_VERSION",
    "AXES",
    "GeneratorIndex",
    "GeneratorTable",
    "PauliExpansion",
    "enumerate_basis",
    "parity_of",
    "expand_traceless",
    "basis_size",
    "sigma",
]

BASIS_ORDERING_VERSION = "w1-lex,w2-lex/1"

AXES = ("x", "y", "z")

_SIGMA = {
    "i": np.eye(2, dtype=complex),
    "x": np.array([[0, 1], [1, 0]], dtype=complex),
    "y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "z": np.array([[1, 0], [0, -1]], dtype=complex),
}


def sigma(axis: str) -> np.ndarray:
    """Return a copy of the 2x2 Pauli matrix for ``axis`` in {i,x,y,z}."""
    return _SIGMA[axis].copy()


@dataclass(frozen=True)
class GeneratorIndex:
    """Identifies one basis entry by qubit positions (1-based) and axes."""

    qubits: tuple[int, ...]
    axes: tuple[str, ...]

    def __post_init__(self):
        if len(self.qubits) != len(self.axes) or len(self.qubits) not in (1, 2):
            raise ValueError("a generator couples one or two qubits")
        if len(set(self.qubits)) != len(self.qubits):
            raise ValueError("qubit positions must be distinct")
        if any(a not in AXES for a in self.axes):
            raise ValueError(f"axes must be in {AXES}")

    @property
    def weight(self) -> int:
        return len(self.qubits)

    def label(self) -> str:
        """Compact text label, e.g. ``x1`` or ``x1y2``."""
        return "".join(f"{a}{q}" for q, a in zip(self.qubits, self.axes))


def parity_of(index: GeneratorIndex) -> str:
    """Transpose parity of the generator matrix.

    A Pauli string with an even number of y factors is a real symmetric
    matrix ("symmetric"); an odd number gives a purely imaginary
    antisymmetric matrix ("antisymmetric").
    """
    n_y = sum(1 for a in index.axes if a == "y")
    return "symmetric" if n_y % 2 == 0 else "antisymmetric"


def basis_size(n: int) -> int:
    """Number of one- and two-body generators: 3n + 9 n (n-1) / 2."""
    return 3 * n + 9 * n * (n - 1) // 2


def _embed(n: int, placement: dict[int, str]) -> np.ndarray:
    """Tensor product with sigma[placement[q]] at qubit q (1-based,
    leftmost factor is qubit 1) and identities elsewhere."""
    out = np.array([[1.0 + 0j]])
    for q in range(1, n + 1):
        out = np.kron(out, _SIGMA[placement.get(q, "i")])
    return out


class GeneratorTable:
    """Ordered table of normalized control generators for n qubits.

    Attributes
    ----------
    n : qubit count
    dim : Hilbert-space dimension N = 2**n
    entries : list of GeneratorIndex in canonical order
    matrices : (K, N, N) complex array, trace-orthonormal
    parity : list of "symmetric"/"antisymmetric", aligned with entries
    weight : (K,) int array of interaction weights (1 or 2)
    """

    def __init__(self, n: int):
        if n < 1:
            raise ValueError("need at least one qubit")
        self.n = n
        self.dim = 2**n
        entries: list[GeneratorIndex] = []
        for q in range(1, n + 1):
            for a in AXES:
                entries.append(GeneratorIndex((q,), (a,)))
        for j, k in itertools.combinations(range(1, n + 1), 2):
            for a, b in itertools.product(AXES, AXES):
                entries.append(GeneratorIndex((j, k), (a, b)))
        self.entries = entries
        norm = 1.0 / np.sqrt(self.dim)
        mats = np.empty((len(entries), self.dim, self.dim), dtype=complex)
        for i, idx in enumerate(entries):
            mats[i] = norm * _embed(n, dict(zip(idx.qubits, idx.axes)))
        self.matrices = mats
        self.parity = [parity_of(idx) for idx in entries]
        self.weight = np.array([idx.weight for idx in entries])
        # Flattened caches for the solver hot loop.
        self.flat = mats.reshape(len(entries), -1)
        self.flat_conj = self.flat.conj()
        self.weight1 = self.weight == 1
        self.symmetric = np.array([p == "symmetric" for p in self.parity])

    @property
    def size(self) -> int:
        return len(self.entries)

    def labels(self) -> list[str]:
        return [idx.label() for idx in self.entries]

    def index_of(self, label: str) -> int:
        try:
            return self.labels().index(label)
        except ValueError:
            raise KeyError(f"no generator labelled {label!r}") from None


@lru_cache(maxsize=8)
def enumerate_basis(n: int) -> GeneratorTable:
    """Build (and cache) the canonical generator table for n qubits."""
    return GeneratorTable(n)


# ---------------------------------------------------------------------------
# Full traceless Pauli expansion (all weights), used by the diagnostics.
# ---------------------------------------------------------------------------


@lru_cache(maxsize=4)
def _full_strings(n: int):
    """All 4**n - 1 non-identity Pauli strings for n qubits.

    Returns (labels, weights, flat) where flat[s] is the normalized
    string matrix flattened row-major.  Strings are ordered by weight,
    then lexicographically in (qubit positions, axes).
    """
    N = 2**n
    norm = 1.0 / np.sqrt(N)
    items = []
    for support_size in range(1, n + 1):
        for qubits in itertools.combinations(range(1, n + 1), support_size):
            for axes in itertools.product(AXES, repeat=support_size):
                label = "".join(f"{a}{q}" for q, a in zip(qubits, axes))
                mat = norm * _embed(n, dict(zip(qubits, axes)))
                items.append((label, support_size, mat.reshape(-1)))
    labels = [it[0] for it in items]
    weights = np.array([it[1] for it in items])
    flat = np.array([it[2] for it in items])
    return labels, weights, flat


@dataclass
class PauliExpansion:
    """Coefficients of a traceless Hermitian matrix over normalized
    Pauli strings, grouped by interaction weight.

    ``coefficients`` maps string label -> real coefficient;
    ``weight_norms`` maps weight -> sum of squared coefficients at that
    weight (so the total equals the squared Frobenius norm).
    """

    n: int
    coefficients: dict[str, float]
    weight_norms: dict[int, float]

    def coefficient_vector(self) -> np.ndarray:
        labels, _, _ = _full_strings(self.n)
        return np.array([self.coefficients[lb] for lb in labels])

    def projection(self, weight: int) -> np.ndarray:
        """Reconstruct the weight-``weight`` component as a matrix."""
        labels, weights, flat = _full_strings(self.n)
        N = 2**self.n
        coeffs = np.array([self.coefficients[lb] for lb in labels])
        mask = weights == weight
        return (coeffs[mask] @ flat[mask]).reshape(N, N)


def expand_traceless(
    a: np.ndarray, n: int, *, allow_large: bool = False, tol: float = 1e-10
) -> PauliExpansion:
    """Expand a traceless Hermitian matrix over all Pauli strings.

    The expansion has 4**n - 1 terms, so it is guarded to n <= 4 unless
    ``allow_large`` is passed.  Coefficients are real; their squares
    summed over each weight give ``weight_norms``, and the grand total
    equals ||a||_F**2.
    """
    if n > 4 and not allow_large:
        raise ValueError(
            "full Pauli expansion grows as 4**n; pass allow_large=True beyond n=4"
        )
    N = 2**n
    a = np.asarray(a, dtype=complex)
    if a.shape != (N, N):
        raise ValueError(f"expected a {N}x{N} matrix for n={n}")
    scale = max(1.0, float(np.abs(a).max()))
    if abs(np.trace(a)) > tol * scale * N:
        raise ValueError("matrix is not traceless within tolerance")
    if np.abs(a - a.conj().T).max() > tol * scale:
        raise ValueError("matrix is not Hermitian within tolerance")
    labels, weights, flat = _full_strings(n)
    # Tr(tau A) = sum_ij tau[i,j] A[j,i] = conj(tau).ravel() . A.ravel()
    # for Hermitian tau.
    coeffs = (flat.conj() @ a.reshape(-1)).real
    weight_norms = {
        int(w): float(np.sum(coeffs[weights == w] ** 2)) for w in np.unique(weights)
    }
    return PauliExpansion(
        n=n,
        coefficients={lb: float(c) for lb, c in zip(labels, coeffs)},
        weight_norms=weight_norms,
    )
