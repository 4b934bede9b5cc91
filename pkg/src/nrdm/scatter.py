"""Synthetic X-ray scattering on s-type Gaussian bases.

Analytic overlap and form-factor matrices, structure factors linear in the
density matrix, the crystallographic R-factor, dataset synthesis with optional
Gaussian noise, and projector fitting from scattering data.  Lengths are bohr,
scattering vectors bohr^-1.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .matrix import DenseSymMatrix, fractional_power
from .purify import (
    ObservableConstraint,
    Projector,
    PurificationOptions,
    clinton_iterate,
)


class UnderdeterminedDataWarning(UserWarning):
    """Fewer independent scattering constraints than free matrix parameters."""


class GaussianBasis:
    """Normalized s-type Gaussian primitives (2a/pi)^(3/4) exp(-a |r - c|^2)."""

    __slots__ = ("centers", "exponents")

    def __init__(self, functions):
        functions = list(functions)
        if not functions:
            raise ValueError("basis needs at least one function")
        centers = np.array([f[0] for f in functions], dtype=float)
        exponents = np.array([f[1] for f in functions], dtype=float)
        if centers.shape != (len(functions), 3):
            raise ValueError("each center must be a 3-vector")
        if np.any(exponents <= 0.0):
            raise ValueError("exponents must be strictly positive")
        centers.flags.writeable = False
        exponents.flags.writeable = False
        self.centers = centers
        self.exponents = exponents

    @property
    def size(self) -> int:
        return len(self.exponents)

    def __len__(self) -> int:
        return self.size

    def values(self, points) -> np.ndarray:
        """Basis-function values at each point, shape (n_points, n_functions)."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        norms = (2.0 * self.exponents / np.pi) ** 0.75
        d2 = np.sum((pts[:, None, :] - self.centers[None, :, :]) ** 2, axis=2)
        return norms[None, :] * np.exp(-self.exponents[None, :] * d2)


@dataclass(frozen=True)
class Reflection:
    k: tuple[float, float, float]
    f: complex
    sigma: float = 0.0


@dataclass(frozen=True)
class ScatteringDataset:
    """Reflections (scattering vector, complex structure factor, noise sigma)."""

    reflections: tuple[Reflection, ...]
    basis_label: str = ""

    def __post_init__(self):
        object.__setattr__(self, "reflections", tuple(self.reflections))
        seen = set()
        for reflection in self.reflections:
            if reflection.sigma < 0.0:
                raise ValueError("sigma must be nonnegative")
            key = tuple(float(x) for x in reflection.k)
            if key in seen:
                raise ValueError(f"duplicate scattering vector {key}")
            seen.add(key)

    def k_vectors(self) -> np.ndarray:
        return np.array([r.k for r in self.reflections], dtype=float)

    def f_values(self) -> np.ndarray:
        return np.array([r.f for r in self.reflections], dtype=complex)


@dataclass(frozen=True)
class FormFactorMatrix:
    """Matrix of <phi_mu| exp(i k.r) |phi_nu> integrals at one scattering vector.

    For a real basis the matrix is complex symmetric and f(-k) is the complex
    conjugate of f(k); both parts are stored as real symmetric matrices.
    """

    real_part: DenseSymMatrix
    imag_part: DenseSymMatrix
    k: tuple[float, float, float]


def overlap_matrix(basis: GaussianBasis) -> DenseSymMatrix:
    """Analytic overlap of normalized s-Gaussians; unit diagonal."""
    a = basis.exponents
    p = a[:, None] + a[None, :]
    product = np.outer(a, a)
    diff = basis.centers[:, None, :] - basis.centers[None, :, :]
    d2 = np.sum(diff * diff, axis=2)
    prefactor = (2.0 * np.sqrt(product) / p) ** 1.5
    return DenseSymMatrix(prefactor * np.exp(-(product / p) * d2))


def form_factor_matrix(basis: GaussianBasis, k) -> FormFactorMatrix:
    """Closed-form Fourier-transform matrix of basis-function products.

    For exponents a, b at centers c_a, c_b the product Gaussian has exponent
    p = a + b and center c_p = (a c_a + b c_b) / p, giving
    f = S * exp(-|k|^2 / (4p)) * exp(i k . c_p).
    """
    kv = np.asarray(k, dtype=float).reshape(3)
    a = basis.exponents
    p = a[:, None] + a[None, :]
    s = overlap_matrix(basis).array
    damp = np.exp(-float(kv @ kv) / (4.0 * p))
    weighted = a[:, None] * basis.centers
    pair_center = (weighted[:, None, :] + weighted[None, :, :]) / p[:, :, None]
    phase = pair_center @ kv
    magnitude = s * damp
    return FormFactorMatrix(
        real_part=DenseSymMatrix(magnitude * np.cos(phase)),
        imag_part=DenseSymMatrix(magnitude * np.sin(phase)),
        k=(float(kv[0]), float(kv[1]), float(kv[2])),
    )


def orthonormalized_form_factor(
    f: FormFactorMatrix, s_inv_sqrt: DenseSymMatrix
) -> FormFactorMatrix:
    """Transform both parts into the symmetrically orthogonalized basis."""
    x = s_inv_sqrt.array
    return FormFactorMatrix(
        real_part=DenseSymMatrix(x @ f.real_part.array @ x),
        imag_part=DenseSymMatrix(x @ f.imag_part.array @ x),
        k=f.k,
    )


def structure_factor(p: DenseSymMatrix, f: FormFactorMatrix) -> complex:
    """F(k) = 2 tr(P f(k)), with the closed-shell factor of two."""
    if p.dim != f.real_part.dim:
        raise ValueError(f"dimension mismatch: {p.dim} vs {f.real_part.dim}")
    pa = p.array
    return complex(
        2.0 * float(np.sum(pa * f.real_part.array)),
        2.0 * float(np.sum(pa * f.imag_part.array)),
    )


def r_factor(f_obs, f_calc) -> float:
    """sum(| |F_obs| - |F_calc| |) / sum(|F_obs|) over structure-factor magnitudes."""
    obs = np.asarray(f_obs, dtype=complex)
    calc = np.asarray(f_calc, dtype=complex)
    if obs.size == 0:
        raise ValueError("no reflections")
    if obs.shape != calc.shape:
        raise ValueError(f"length mismatch: {obs.shape} vs {calc.shape}")
    denominator = float(np.sum(np.abs(obs)))
    if denominator == 0.0:
        raise ValueError("all observed magnitudes are zero")
    return float(np.sum(np.abs(np.abs(obs) - np.abs(calc))) / denominator)


def synthesize_dataset(
    p_ref,
    basis: GaussianBasis,
    k_list,
    noise_sigma: float = 0.0,
    rng=None,
    basis_label: str = "",
) -> ScatteringDataset:
    """Exact structure factors of a reference projector, plus optional noise.

    The reference density matrix lives in the orthogonalized basis.  Gaussian
    noise of standard deviation noise_sigma is added independently to the real
    and imaginary parts; the sigma is recorded on every reflection.
    """
    if noise_sigma < 0.0:
        raise ValueError("noise_sigma must be nonnegative")
    p = p_ref.P if isinstance(p_ref, Projector) else p_ref
    x = fractional_power(overlap_matrix(basis), -0.5)
    generator = np.random.default_rng(rng)
    reflections = []
    for k in np.atleast_2d(np.asarray(k_list, dtype=float)):
        f_ortho = orthonormalized_form_factor(form_factor_matrix(basis, k), x)
        value = structure_factor(p, f_ortho)
        if noise_sigma > 0.0:
            value += complex(
                generator.normal(0.0, noise_sigma),
                generator.normal(0.0, noise_sigma),
            )
        reflections.append(
            Reflection(
                k=(float(k[0]), float(k[1]), float(k[2])),
                f=value,
                sigma=float(noise_sigma),
            )
        )
    return ScatteringDataset(tuple(reflections), basis_label)


@dataclass(frozen=True)
class FitResult:
    projector: Projector
    r_factor: float
    n_constraints: int
    n_free_parameters: int
    underdetermined: bool


def fit_projector(
    dataset: ScatteringDataset,
    basis: GaussianBasis,
    trace_target: float,
    p0: DenseSymMatrix | None = None,
    options: PurificationOptions | None = None,
) -> FitResult:
    """Fit an idempotent density matrix to scattering data.

    Every reflection contributes a real and (when nonzero) an imaginary trace
    constraint assembled in the orthogonalized basis; the constrained
    purification then runs from p0, which defaults to the trace-matching
    multiple of the identity.  Emits UnderdeterminedDataWarning when the
    constraint count falls below the number of free matrix parameters.
    """
    dim = len(basis)
    x = fractional_power(overlap_matrix(basis), -0.5)
    constraints = []
    factors = []
    for index, reflection in enumerate(dataset.reflections):
        f_ortho = orthonormalized_form_factor(
            form_factor_matrix(basis, reflection.k), x
        )
        factors.append(f_ortho)
        constraints.append(
            ObservableConstraint(
                DenseSymMatrix(2.0 * f_ortho.real_part.array),
                float(reflection.f.real),
                f"re_f[{index}]",
            )
        )
        if np.any(f_ortho.imag_part.array):
            constraints.append(
                ObservableConstraint(
                    DenseSymMatrix(2.0 * f_ortho.imag_part.array),
                    float(reflection.f.imag),
                    f"im_f[{index}]",
                )
            )
    n_constraints = len(constraints) + 1  # trace normalization is always added
    n_free = dim * (dim + 1) // 2
    underdetermined = n_constraints < n_free
    if underdetermined:
        warnings.warn(
            f"{n_constraints} scattering constraints for {n_free} free matrix "
            "parameters; the fitted matrix is not determined by the data",
            UnderdeterminedDataWarning,
            stacklevel=2,
        )
    start = (
        p0
        if p0 is not None
        else DenseSymMatrix(np.eye(dim) * (float(trace_target) / dim))
    )
    projector = clinton_iterate(start, trace_target, constraints, options)
    calculated = [structure_factor(projector.P, f) for f in factors]
    return FitResult(
        projector=projector,
        r_factor=r_factor(dataset.f_values(), calculated),
        n_constraints=n_constraints,
        n_free_parameters=n_free,
        underdetermined=underdetermined,
    )


def density_on_grid(p, basis: GaussianBasis, s_inv_sqrt: DenseSymMatrix, grid) -> np.ndarray:
    """Electron density 2 chi(r)^T P chi(r) with chi = S^(-1/2) phi(r)."""
    matrix = (p.P if isinstance(p, Projector) else p).array
    if matrix.shape[0] != len(basis) or s_inv_sqrt.dim != len(basis):
        raise ValueError("density matrix, orthogonalizer and basis sizes must agree")
    chi = basis.values(grid) @ s_inv_sqrt.array
    return 2.0 * np.einsum("mi,ij,mj->m", chi, matrix, chi)
