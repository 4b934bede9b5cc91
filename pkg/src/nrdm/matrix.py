"""Dense symmetric matrices and the small linear-algebra toolkit built on them.

Everything downstream (purification, scattering fits, fragment assembly)
manipulates real symmetric matrices; this module owns the carrier type and
the eigen-based primitives.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EigenSolverError, SingularOverlapError

#: relative symmetry tolerance applied at construction
SYMMETRY_TOL = 1e-12

#: eigenvalues at or below this are treated as singular in fractional powers
POSITIVE_DEFINITE_TOL = 1e-10


class DenseSymMatrix:
    """Immutable real symmetric matrix.

    Construction checks symmetry entrywise,
    ``|A[i,j] - A[j,i]| <= tol * max(1, |A[i,j]|)``, then stores the average
    ``(A + A.T) / 2``.  The largest pre-symmetrization deviation is recorded
    as ``asymmetry``.
    """

    __slots__ = ("_array", "asymmetry")

    def __init__(self, entries, tol: float = SYMMETRY_TOL):
        array = np.array(entries, dtype=float)
        if array.ndim != 2 or array.shape[0] != array.shape[1]:
            raise ValueError(f"expected a square matrix, got shape {array.shape}")
        if array.shape[0] < 1:
            raise ValueError("matrix dimension must be at least 1")
        if not np.all(np.isfinite(array)):
            raise ValueError("matrix entries must be finite")
        deviation = np.abs(array - array.T)
        excess = deviation - tol * np.maximum(1.0, np.abs(array))
        if np.any(excess > 0.0):
            i, j = np.unravel_index(int(np.argmax(excess)), array.shape)
            raise ValueError(
                f"matrix is not symmetric within {tol:g} at ({i},{j}): "
                f"{array[i, j]!r} vs {array[j, i]!r}"
            )
        self.asymmetry = float(deviation.max())
        symmetrized = 0.5 * (array + array.T)
        symmetrized.flags.writeable = False
        self._array = symmetrized

    @property
    def dim(self) -> int:
        return self._array.shape[0]

    @property
    def array(self) -> np.ndarray:
        """Read-only view of the entries."""
        return self._array

    def trace(self) -> float:
        return float(np.trace(self._array))

    @classmethod
    def identity(cls, dim: int) -> "DenseSymMatrix":
        return cls(np.eye(dim))

    def __repr__(self) -> str:
        return f"DenseSymMatrix(dim={self.dim})"


@dataclass(frozen=True)
class EigenDecomposition:
    """Eigenvalues (ascending) and column-orthonormal eigenvectors."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray


def sym_eigendecompose(matrix: DenseSymMatrix) -> EigenDecomposition:
    """Full eigendecomposition of a symmetric matrix."""
    try:
        eigenvalues, eigenvectors = np.linalg.eigh(matrix.array)
    except np.linalg.LinAlgError as exc:
        raise EigenSolverError(f"symmetric eigensolver failed: {exc}") from exc
    eigenvalues.flags.writeable = False
    eigenvectors.flags.writeable = False
    return EigenDecomposition(eigenvalues, eigenvectors)


def fractional_power(matrix: DenseSymMatrix, exponent: float) -> DenseSymMatrix:
    """S**(+1/2) or S**(-1/2) of a positive-definite matrix.

    Raises SingularOverlapError when the smallest eigenvalue is at or below
    the positive-definiteness tolerance, naming the offending eigenvalue.
    """
    if exponent not in (0.5, -0.5):
        raise ValueError(f"exponent must be +1/2 or -1/2, got {exponent!r}")
    decomposition = sym_eigendecompose(matrix)
    smallest = float(decomposition.eigenvalues[0])
    if smallest <= POSITIVE_DEFINITE_TOL:
        raise SingularOverlapError(smallest, POSITIVE_DEFINITE_TOL)
    powered = decomposition.eigenvalues**exponent
    q = decomposition.eigenvectors
    return DenseSymMatrix((q * powered) @ q.T)


def trace_product(a: DenseSymMatrix, b: DenseSymMatrix) -> float:
    """tr(A B) for symmetric A and B."""
    if a.dim != b.dim:
        raise ValueError(f"dimension mismatch: {a.dim} vs {b.dim}")
    return float(np.sum(a.array * b.array))


def idempotency_residual(p: DenseSymMatrix) -> float:
    """Frobenius norm of P^2 - P; zero exactly when P is a projector."""
    a = p.array
    return float(np.linalg.norm(a @ a - a))
