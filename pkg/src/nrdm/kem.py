"""Kernel (fragment) machinery.

Recombination of per-kernel properties, assembly of kernel density matrices
into the full-system density, symmetric orthogonalization into an initial
purification iterant, and purification of the assembled matrix to an
N-representable projector.  Single kernels are disjoint index sets covering
the full basis; double kernels are their pairwise unions.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .matrix import DenseSymMatrix, fractional_power, sym_eigendecompose, trace_product
from .purify import Projector, PurificationOptions, clinton_iterate


class TwoKernelSchemeWarning(UserWarning):
    """A two-kernel split gives no savings: the double kernel is the whole system."""


@dataclass(frozen=True)
class FragmentScheme:
    """Disjoint single-kernel index sets covering the full basis exactly."""

    full_dim: int
    single_kernels: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        kernels = tuple(
            tuple(sorted(int(i) for i in kernel)) for kernel in self.single_kernels
        )
        object.__setattr__(self, "single_kernels", kernels)
        if self.full_dim < 1:
            raise ValueError("full_dim must be positive")
        if len(kernels) < 2:
            raise ValueError("at least two single kernels are required")
        if any(len(kernel) == 0 for kernel in kernels):
            raise ValueError("single kernels must be non-empty")
        flat = [i for kernel in kernels for i in kernel]
        if len(set(flat)) != len(flat):
            raise ValueError("single kernels must be disjoint")
        if sorted(flat) != list(range(self.full_dim)):
            raise ValueError("single kernels must cover every basis index exactly once")
        if len(kernels) == 2:
            warnings.warn(
                "two-kernel scheme: the double kernel is the full system and "
                "fragmentation saves nothing",
                TwoKernelSchemeWarning,
                stacklevel=2,
            )

    @property
    def n(self) -> int:
        return len(self.single_kernels)

    def double_pairs(self) -> list[tuple[int, int]]:
        return [(i, j) for i in range(self.n) for j in range(i + 1, self.n)]

    def double_indices(self, i: int, j: int) -> tuple[int, ...]:
        return tuple(sorted(self.single_kernels[i] + self.single_kernels[j]))


@dataclass(frozen=True)
class KernelDensity:
    """A kernel's density matrix on its own indices plus its scatter map."""

    kind: str  # "single" or "double"
    members: tuple[int, ...]
    r_local: DenseSymMatrix
    index_map: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "members", tuple(int(i) for i in self.members))
        object.__setattr__(self, "index_map", tuple(int(i) for i in self.index_map))
        if self.kind == "single":
            if len(self.members) != 1:
                raise ValueError("a single kernel has exactly one member")
        elif self.kind == "double":
            if len(self.members) != 2 or self.members[0] == self.members[1]:
                raise ValueError("a double kernel has two distinct members")
        else:
            raise ValueError(f"unknown kernel kind {self.kind!r}")
        if len(set(self.index_map)) != len(self.index_map):
            raise ValueError("index map has duplicate entries")
        if self.r_local.dim != len(self.index_map):
            raise ValueError(
                f"kernel matrix dimension {self.r_local.dim} does not match "
                f"index map size {len(self.index_map)}"
            )


@dataclass(frozen=True)
class KemProperty:
    """Per-kernel scalar or fixed-length-vector values ready for recombination."""

    doubles: tuple
    singles: tuple
    n: int

    def __post_init__(self):
        object.__setattr__(self, "doubles", tuple(self.doubles))
        object.__setattr__(self, "singles", tuple(self.singles))
        expected = self.n * (self.n - 1) // 2
        if len(self.doubles) != expected:
            raise ValueError(
                f"expected {expected} double-kernel values for n={self.n}, "
                f"got {len(self.doubles)}"
            )
        if len(self.singles) != self.n:
            raise ValueError(
                f"expected {self.n} single-kernel values, got {len(self.singles)}"
            )


def kem_combine(prop: KemProperty):
    """sum(doubles) - (n - 2) * sum(singles), componentwise for vector values."""
    doubles = np.asarray(prop.doubles, dtype=float)
    singles = np.asarray(prop.singles, dtype=float)
    if doubles.shape[1:] != singles.shape[1:]:
        raise ValueError("double and single values have mismatched shapes")
    combined = doubles.sum(axis=0) - (prop.n - 2) * singles.sum(axis=0)
    return float(combined) if np.ndim(combined) == 0 else combined


def augment(kernel: KernelDensity, full_dim: int) -> DenseSymMatrix:
    """Scatter the kernel matrix into the full dimension, zero elsewhere."""
    if min(kernel.index_map) < 0 or max(kernel.index_map) >= full_dim:
        raise ValueError(
            f"index map {kernel.index_map} out of range for dimension {full_dim}"
        )
    out = np.zeros((full_dim, full_dim))
    out[np.ix_(kernel.index_map, kernel.index_map)] = kernel.r_local.array
    return DenseSymMatrix(out)


def assemble_r_kem(scheme: FragmentScheme, doubles, singles) -> DenseSymMatrix:
    """Augmented fragment summation sum(doubles) - (n - 2) * sum(singles)."""
    n = scheme.n
    seen_singles: dict[int, KernelDensity] = {}
    for kernel in singles:
        if kernel.kind != "single":
            raise ValueError(f"kernel {kernel.members} listed as single is {kernel.kind}")
        (i,) = kernel.members
        if not 0 <= i < n or i in seen_singles:
            raise ValueError(f"bad or duplicate single kernel {i}")
        if kernel.index_map != scheme.single_kernels[i]:
            raise ValueError(f"single kernel {i} index map does not match the scheme")
        seen_singles[i] = kernel
    if len(seen_singles) != n:
        raise ValueError(f"expected {n} single kernels, got {len(seen_singles)}")
    seen_doubles: dict[tuple[int, int], KernelDensity] = {}
    for kernel in doubles:
        if kernel.kind != "double":
            raise ValueError(f"kernel {kernel.members} listed as double is {kernel.kind}")
        pair = (min(kernel.members), max(kernel.members))
        if not 0 <= pair[0] < pair[1] < n or pair in seen_doubles:
            raise ValueError(f"bad or duplicate double kernel {pair}")
        if kernel.index_map != scheme.double_indices(*pair):
            raise ValueError(f"double kernel {pair} index map does not match the scheme")
        seen_doubles[pair] = kernel
    if len(seen_doubles) != n * (n - 1) // 2:
        raise ValueError(
            f"expected {n * (n - 1) // 2} double kernels, got {len(seen_doubles)}"
        )
    total = np.zeros((scheme.full_dim, scheme.full_dim))
    for kernel in seen_doubles.values():
        total += augment(kernel, scheme.full_dim).array
    for kernel in seen_singles.values():
        total -= (n - 2) * augment(kernel, scheme.full_dim).array
    return DenseSymMatrix(total)


def lowdin_initial_iterant(r_kem: DenseSymMatrix, s: DenseSymMatrix) -> DenseSymMatrix:
    """S^(1/2) R S^(1/2): the assembled density carried into the orthonormal basis."""
    if r_kem.dim != s.dim:
        raise ValueError(f"dimension mismatch: {r_kem.dim} vs {s.dim}")
    half = fractional_power(s, 0.5).array
    return DenseSymMatrix(half @ r_kem.array @ half)


def purify_assembled(
    p0: DenseSymMatrix,
    trace_target: float,
    options: PurificationOptions | None = None,
) -> Projector:
    """Purify the assembled iterant to an N-representable projector.

    Only the trace constraint is applied; the trace target counts occupied
    orbitals (half the electron count for closed shells).
    """
    return clinton_iterate(p0, trace_target, (), options)


def model_energy(p: DenseSymMatrix, h: DenseSymMatrix) -> float:
    """Closed-shell single-particle energy 2 tr(P H) for a fixed Hamiltonian."""
    return 2.0 * trace_product(p, h)


def aufbau_projector(h: DenseSymMatrix, n_occ: int) -> DenseSymMatrix:
    """Projector onto the n_occ lowest orbitals of H; minimizes 2 tr(P H)."""
    if not 0 < n_occ <= h.dim:
        raise ValueError(f"n_occ must lie in [1, {h.dim}], got {n_occ}")
    decomposition = sym_eigendecompose(h)
    occupied = decomposition.eigenvectors[:, :n_occ]
    return DenseSymMatrix(occupied @ occupied.T)


def generate_toy_kernels(
    h: DenseSymMatrix,
    scheme: FragmentScheme,
    single_occupations,
    double_occupations: dict | None = None,
):
    """Aufbau kernel densities from diagonal blocks of a model Hamiltonian.

    Stands in for externally computed kernels in end-to-end tests.  Double
    kernel occupation defaults to the sum of its singles'.  Returns
    (doubles, singles).
    """
    occupations = [int(o) for o in single_occupations]
    if len(occupations) != scheme.n:
        raise ValueError(f"expected {scheme.n} occupations, got {len(occupations)}")
    singles = []
    for i, indices in enumerate(scheme.single_kernels):
        block = DenseSymMatrix(h.array[np.ix_(indices, indices)])
        singles.append(
            KernelDensity("single", (i,), aufbau_projector(block, occupations[i]), indices)
        )
    doubles = []
    for i, j in scheme.double_pairs():
        indices = scheme.double_indices(i, j)
        occ = (double_occupations or {}).get((i, j), occupations[i] + occupations[j])
        block = DenseSymMatrix(h.array[np.ix_(indices, indices)])
        doubles.append(
            KernelDensity("double", (i, j), aufbau_projector(block, occ), indices)
        )
    return doubles, singles
