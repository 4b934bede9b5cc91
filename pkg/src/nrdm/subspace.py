"""Decomposition of a full-system projector into block-supported subspace kernels.

Each kernel seeks a matrix P' supported on its index block with P' = P' P P'.
The solve runs the constrained purification update on the block with two
constraints: the trace pinned to the projector's block trace, and the
quadratic subspace condition imposed through its trace-linear linearization at
the current iterate.  Convergence is judged on the true residual
tr((P' - P' P P')^2), never the linearized one.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .kem import FragmentScheme
from .matrix import DenseSymMatrix
from .purify import Projector, PurificationOptions, _solve_multiplier_system

#: a kernel whose trace falls below this while targeting a positive trace has collapsed
COLLAPSE_TRACE = 1e-6


@dataclass(frozen=True)
class SubspaceKernel:
    """One solved kernel: a full-dimension matrix supported only on its block."""

    kind: str
    members: tuple[int, ...]
    p_prime: DenseSymMatrix
    trace_target: float
    trace_value: float
    residual_subspace: float
    iterations_used: int
    converged: bool
    failure: str | None = None
    residual_trail: tuple[float, ...] = ()


def triple_product(p_prime: DenseSymMatrix, p: DenseSymMatrix) -> DenseSymMatrix:
    """P' P P'; support stays confined to P''s block."""
    if p_prime.dim != p.dim:
        raise ValueError(f"dimension mismatch: {p_prime.dim} vs {p.dim}")
    a = p_prime.array
    return DenseSymMatrix(a @ p.array @ a)


def subspace_residual(p_prime: DenseSymMatrix, p: DenseSymMatrix) -> float:
    """tr((P' - P' P P')^2) >= 0; zero exactly when P' lies inside P's range."""
    if p_prime.dim != p.dim:
        raise ValueError(f"dimension mismatch: {p_prime.dim} vs {p.dim}")
    a = p_prime.array
    diff = a - a @ p.array @ a
    return float(np.sum(diff * diff))


def constraint_target(p_prime: DenseSymMatrix, p: DenseSymMatrix) -> float:
    """tr(P'^2 P P' + P' P P'^2 - (P' P P')^2).

    Equality of this value with tr(P' P') is equivalent to the subspace
    condition, which turns the quadratic condition into a trace-linear
    constraint with observable O = P' evaluated at the current iterate.
    """
    if p_prime.dim != p.dim:
        raise ValueError(f"dimension mismatch: {p_prime.dim} vs {p.dim}")
    a = p_prime.array
    b = p.array
    a2 = a @ a
    m = a @ b @ a
    return float(2.0 * np.sum((a2 @ b) * a) - np.sum(m * m))


def _solve_block(p_block, trace_target, opts, initial, strict_idempotency):
    """Iterate the subspace condition on one block; returns block + diagnostics."""
    nb = p_block.shape[0]
    b = p_block.copy() if initial is None else np.array(initial, dtype=float)
    identity = np.eye(nb)
    trail: list[float] = []
    failure = None
    used = 0
    for used in range(opts.max_iterations + 1):
        m = b @ p_block @ b
        diff = b - m
        residual = float(np.sum(diff * diff))
        trace_error = abs(float(np.trace(b)) - trace_target)
        trail.append(residual)
        idempotency_ok = True
        if strict_idempotency:
            idempotency_ok = (
                float(np.linalg.norm(b @ b - b)) <= opts.idempotency_tolerance
            )
        if (
            residual <= opts.constraint_tolerance
            and trace_error <= opts.constraint_tolerance
            and idempotency_ok
        ):
            return b, residual, used, True, None, trail
        if used == opts.max_iterations:
            failure = (
                f"no convergence within {opts.max_iterations} iterations "
                f"(residual {residual:.3e}, trace error {trace_error:.3e})"
            )
            break
        if trace_target > COLLAPSE_TRACE and float(np.trace(b)) < COLLAPSE_TRACE:
            failure = "collapsed toward the zero matrix while targeting a positive trace"
            break
        if float(np.linalg.norm(b)) > 10.0 * nb:
            failure = "iterate norm exceeded the divergence guard"
            break
        b2 = b @ b
        step = 3.0 * b2 - 2.0 * (b2 @ b)
        linear_target = float(2.0 * np.sum((b2 @ p_block) * b) - np.sum(m * m))
        multipliers = _solve_multiplier_system(
            step,
            np.stack((identity, b)),
            (trace_target, linear_target),
            opts.multiplier_regularization,
        )
        b = step + multipliers[0] * identity + multipliers[1] * b
        b = 0.5 * (b + b.T)
    return b, trail[-1], used, False, failure, trail


def _scatter(block, indices, full_dim) -> DenseSymMatrix:
    out = np.zeros((full_dim, full_dim))
    out[np.ix_(indices, indices)] = block
    return DenseSymMatrix(out)


def solve_subspace_block(
    p,
    indices,
    trace_target: float | None = None,
    options: PurificationOptions | None = None,
    initial: DenseSymMatrix | None = None,
    strict_idempotency: bool = False,
) -> SubspaceKernel:
    """Solve one index block against a projector.

    The trace target defaults to the projector's block trace; the initial
    iterate defaults to the block itself.
    """
    matrix = p.P if isinstance(p, Projector) else p
    opts = options if options is not None else PurificationOptions()
    indices = tuple(sorted(int(i) for i in indices))
    if not indices or indices[0] < 0 or indices[-1] >= matrix.dim:
        raise ValueError(f"block indices {indices} out of range for dim {matrix.dim}")
    block = matrix.array[np.ix_(indices, indices)]
    target = float(np.trace(block)) if trace_target is None else float(trace_target)
    initial_block = None
    if initial is not None:
        if initial.dim != len(indices):
            raise ValueError("initial iterate must match the block dimension")
        initial_block = initial.array
    result, residual, used, converged, failure, trail = _solve_block(
        block, target, opts, initial_block, strict_idempotency
    )
    return SubspaceKernel(
        kind="block",
        members=indices,
        p_prime=_scatter(result, indices, matrix.dim),
        trace_target=target,
        trace_value=float(np.trace(result)),
        residual_subspace=residual,
        iterations_used=used,
        converged=converged,
        failure=failure,
        residual_trail=tuple(trail),
    )


def decompose(
    p: Projector,
    scheme: FragmentScheme,
    options: PurificationOptions | None = None,
    strict_idempotency: bool = False,
    workers: int = 1,
) -> list[SubspaceKernel]:
    """Solve every single and double kernel of the scheme against the projector.

    Kernels are independent; per-kernel failures are recorded on the returned
    entries while the remaining kernels are still solved and returned.
    """
    opts = options if options is not None else PurificationOptions()
    if scheme.full_dim != p.P.dim:
        raise ValueError(
            f"scheme dimension {scheme.full_dim} does not match projector {p.P.dim}"
        )
    full = p.P.array
    jobs = [("single", (i,), scheme.single_kernels[i]) for i in range(scheme.n)]
    jobs += [("double", pair, scheme.double_indices(*pair)) for pair in scheme.double_pairs()]

    def solve(job):
        kind, members, indices = job
        block = full[np.ix_(indices, indices)]
        target = float(np.trace(block))
        result, residual, used, converged, failure, trail = _solve_block(
            block, target, opts, None, strict_idempotency
        )
        return SubspaceKernel(
            kind=kind,
            members=tuple(members),
            p_prime=_scatter(result, indices, scheme.full_dim),
            trace_target=target,
            trace_value=float(np.trace(result)),
            residual_subspace=residual,
            iterations_used=used,
            converged=converged,
            failure=failure,
            residual_trail=tuple(trail),
        )

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(solve, jobs))
    return [solve(job) for job in jobs]


def reassembly_residual(p: Projector, kernels, n: int) -> float:
    """Frobenius distance between P and sum(doubles) - (n-2) * sum(singles).

    Diagnostic only: how well the fragment summation identity is realized by
    independently solved kernels is reported, never asserted.
    """
    singles = [k for k in kernels if k.kind == "single"]
    doubles = [k for k in kernels if k.kind == "double"]
    if len(singles) != n or len(doubles) != n * (n - 1) // 2:
        raise ValueError(
            f"incomplete kernel set: {len(singles)} singles and "
            f"{len(doubles)} doubles for n={n}"
        )
    total = np.zeros_like(p.P.array)
    for kernel in doubles:
        total += kernel.p_prime.array
    for kernel in singles:
        total -= (n - 2) * kernel.p_prime.array
    return float(np.linalg.norm(p.P.array - total))
