"""Constrained purification of symmetric matrices toward idempotent projectors.

The update is the cubic idempotency map plus a multiplier correction,

    P_{n+1} = 3 P_n^2 - 2 P_n^3 + sum_k lambda_k O_k,

where the multipliers are solved each step from the constraint Gram system so
that the new iterate satisfies tr(P_{n+1} O_j) = target_j up to regularization
error.  Trace normalization is always constraint 0 and cannot be omitted.
Convergence requires both the idempotency residual and every constraint
residual to fall below their tolerances; the converged iterate is then a
single-determinant N-representable density matrix by construction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    ConvergenceError,
    DivergenceError,
    IllConditionedConstraintsError,
    StagnationError,
)
from .matrix import DenseSymMatrix, idempotency_residual

#: an eigenvalue this close to 1/2 counts as sitting on the unstable fixed point
HALF_POINT_WINDOW = 1e-8

#: consecutive iterations at the unstable fixed point before aborting
HALF_POINT_LIMIT = 10

#: Gram eigenvalues below this (relative to the largest) are numerical null space
NULLSPACE_CUTOFF = 1e-13


@dataclass(frozen=True)
class ObservableConstraint:
    """A trace-linear constraint tr(P O) = target."""

    matrix: DenseSymMatrix
    target: float
    label: str = ""


@dataclass(frozen=True)
class PurificationOptions:
    max_iterations: int = 500
    idempotency_tolerance: float = 1e-10
    constraint_tolerance: float = 1e-10
    multiplier_regularization: float = 1e-12

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")
        if self.idempotency_tolerance <= 0.0 or self.constraint_tolerance <= 0.0:
            raise ValueError("tolerances must be positive")
        if self.multiplier_regularization < 0.0:
            raise ValueError("multiplier_regularization must be nonnegative")


@dataclass(frozen=True)
class Projector:
    """A converged idempotent iterate with its convergence certificates."""

    P: DenseSymMatrix
    trace_target: float
    residual_idempotency: float
    residual_constraints: tuple[float, ...]
    iterations_used: int


def mcweeny_step(p: DenseSymMatrix) -> DenseSymMatrix:
    """One unconstrained purification step 3 P^2 - 2 P^3.

    Shares P's eigenvectors and maps each eigenvalue x to 3x^2 - 2x^3, whose
    stable fixed points are 0 and 1.
    """
    a = p.array
    a2 = a @ a
    return DenseSymMatrix(3.0 * a2 - 2.0 * (a2 @ a))


def _solve_multiplier_system(t_array, o_stack, targets, regularization):
    """Solve (G + reg*I) lambda = rhs with G[j,k] = tr(O_j O_k).

    rhs_j = target_j - tr(T O_j).  The Gram matrix is an inner-product Gram
    and therefore positive semidefinite; eigendirections below
    NULLSPACE_CUTOFF (relative) correspond to constraint combinations whose
    matrix update vanishes identically, so their multiplier components are
    dropped instead of being amplified out of float cancellation noise.
    """
    if regularization < 0.0:
        raise ValueError("regularization must be nonnegative")
    gram = np.einsum("aij,bij->ab", o_stack, o_stack)
    rhs = np.asarray(targets, dtype=float) - np.einsum("aij,ij->a", o_stack, t_array)
    spectrum, vectors = np.linalg.eigh(0.5 * (gram + gram.T))
    spectrum = np.where(spectrum > 0.0, spectrum, 0.0)
    largest = float(spectrum[-1])
    if largest == 0.0:
        if float(np.max(np.abs(rhs), initial=0.0)) == 0.0:
            return np.zeros(len(o_stack))
        raise IllConditionedConstraintsError(
            np.inf, "all constraint matrices are zero"
        )
    keep = spectrum > largest * NULLSPACE_CUTOFF
    if regularization == 0.0 and not bool(keep.all()):
        smallest = float(spectrum.min())
        estimate = np.inf if smallest == 0.0 else largest / smallest
        raise IllConditionedConstraintsError(
            estimate, "Gram matrix is singular and regularization is zero"
        )
    coefficients = vectors.T @ rhs
    damped = np.where(keep, coefficients / (spectrum + regularization), 0.0)
    multipliers = vectors @ damped
    if not np.all(np.isfinite(multipliers)):
        raise IllConditionedConstraintsError(np.inf, "multiplier solution is not finite")
    return multipliers


def solve_multipliers(
    t: DenseSymMatrix, constraints, regularization: float
) -> np.ndarray:
    """Multipliers making T + sum_k lambda_k O_k satisfy every constraint.

    Satisfaction is up to regularization error: the Gram system carries a
    ridge term ``regularization`` on its diagonal.
    """
    constraints = list(constraints)
    if not constraints:
        raise ValueError("at least one constraint is required")
    for constraint in constraints:
        if constraint.matrix.dim != t.dim:
            raise ValueError(
                f"constraint {constraint.label!r} has dimension "
                f"{constraint.matrix.dim}, iterate has {t.dim}"
            )
    o_stack = np.stack([c.matrix.array for c in constraints])
    targets = [c.target for c in constraints]
    return _solve_multiplier_system(t.array, o_stack, targets, regularization)


def clinton_iterate(
    p0: DenseSymMatrix,
    trace_target: float,
    extra_constraints=(),
    options: PurificationOptions | None = None,
) -> Projector:
    """Iterate to an idempotent matrix with the given trace and extra constraints.

    Returns a Projector carrying the final residuals and the iteration count.
    Raises DivergenceError when the iterate norm escapes, StagnationError when
    an eigenvalue pins at the unstable midpoint 1/2, and ConvergenceError when
    the iteration budget runs out; convergence errors carry the residual
    trajectory as (idempotency, worst-constraint) pairs.
    """
    opts = options if options is not None else PurificationOptions()
    dim = p0.dim
    if not 0.0 < trace_target <= dim:
        raise ValueError(f"trace target must lie in (0, {dim}], got {trace_target}")
    constraints = (
        ObservableConstraint(DenseSymMatrix.identity(dim), float(trace_target), "trace"),
    ) + tuple(extra_constraints)
    for constraint in constraints[1:]:
        if constraint.matrix.dim != dim:
            raise ValueError(
                f"constraint {constraint.label!r} has dimension "
                f"{constraint.matrix.dim}, iterate has {dim}"
            )
    o_stack = np.stack([c.matrix.array for c in constraints])
    targets = np.array([c.target for c in constraints])

    a = p0.array.copy()
    trajectory: list[tuple[float, float]] = []
    half_run = 0
    for used in range(opts.max_iterations + 1):
        residual_idem = float(np.linalg.norm(a @ a - a))
        residuals = np.abs(np.einsum("kij,ij->k", o_stack, a) - targets)
        worst = float(residuals.max())
        trajectory.append((residual_idem, worst))
        if residual_idem <= opts.idempotency_tolerance and worst <= opts.constraint_tolerance:
            return Projector(
                P=DenseSymMatrix(a),
                trace_target=float(trace_target),
                residual_idempotency=residual_idem,
                residual_constraints=tuple(float(r) for r in residuals),
                iterations_used=used,
            )
        if used == opts.max_iterations:
            break
        if float(np.linalg.norm(a)) > 10.0 * dim:
            raise DivergenceError(
                f"iterate norm exceeded the divergence guard after {used} iterations",
                trajectory=trajectory,
            )
        eigenvalues = np.linalg.eigvalsh(a)
        if np.any(np.abs(eigenvalues - 0.5) < HALF_POINT_WINDOW):
            half_run += 1
        else:
            half_run = 0
        if half_run >= HALF_POINT_LIMIT:
            raise StagnationError(
                f"an eigenvalue sat within {HALF_POINT_WINDOW:g} of 1/2 for "
                f"{half_run} consecutive iterations",
                trajectory=trajectory,
            )
        a2 = a @ a
        t = 3.0 * a2 - 2.0 * (a2 @ a)
        multipliers = _solve_multiplier_system(
            t, o_stack, targets, opts.multiplier_regularization
        )
        a = t + np.einsum("k,kij->ij", multipliers, o_stack)
        a = 0.5 * (a + a.T)
    raise ConvergenceError(
        f"no convergence within {opts.max_iterations} iterations "
        f"(idempotency {trajectory[-1][0]:.3e}, worst constraint {trajectory[-1][1]:.3e})",
        trajectory=trajectory,
    )


def occupation_spectrum(projector: Projector) -> np.ndarray:
    """Ascending eigenvalues of the projector; diagnoses closeness to {0, 1}."""
    return np.linalg.eigvalsh(projector.P.array)


def certify_projector(
    p: DenseSymMatrix,
    trace_target: float | None = None,
    tolerance: float = 1e-10,
) -> Projector:
    """Wrap an externally supplied matrix as a Projector after checking idempotency."""
    residual = idempotency_residual(p)
    if residual > tolerance:
        raise ValueError(
            f"matrix is not idempotent: residual {residual:.3e} exceeds {tolerance:g}"
        )
    target = float(p.trace()) if trace_target is None else float(trace_target)
    return Projector(
        P=p,
        trace_target=target,
        residual_idempotency=residual,
        residual_constraints=(abs(p.trace() - target),),
        iterations_used=0,
    )
