"""Exception hierarchy shared across the package."""

from __future__ import annotations


class NrdmError(Exception):
    """Base class for package-specific failures."""


class MatrixFormatError(NrdmError):
    """An input file failed to parse or validate."""


class EigenSolverError(NrdmError):
    """The symmetric eigensolver did not converge."""


class SingularOverlapError(NrdmError):
    """A matrix required to be positive definite has a near-zero eigenvalue."""

    def __init__(self, eigenvalue: float, tolerance: float):
        self.eigenvalue = float(eigenvalue)
        self.tolerance = float(tolerance)
        super().__init__(
            f"matrix is numerically singular: smallest eigenvalue "
            f"{self.eigenvalue:.6e} is at or below the tolerance {self.tolerance:g}"
        )


class IllConditionedConstraintsError(NrdmError):
    """The constraint Gram system is singular beyond what regularization covers."""

    def __init__(self, condition_estimate: float, detail: str = ""):
        self.condition_estimate = float(condition_estimate)
        message = (
            f"constraint Gram matrix is ill-conditioned "
            f"(condition estimate {self.condition_estimate:.3e})"
        )
        if detail:
            message += f": {detail}"
        super().__init__(message)


class ConvergenceError(NrdmError):
    """An iteration exhausted its budget; carries the residual trajectory."""

    def __init__(self, message: str, trajectory=None):
        self.trajectory = tuple(trajectory) if trajectory is not None else ()
        super().__init__(message)


class DivergenceError(ConvergenceError):
    """The iterate norm escaped the divergence guard."""


class StagnationError(ConvergenceError):
    """An eigenvalue pinned at the unstable midpoint of the purification map."""
