"""On-disk formats.

DSM v1 matrix text (header ``dsm 1 <dim>`` plus dim rows of dim values,
round-tripping at 17 significant digits), JSON files for Gaussian bases,
scattering datasets, fragment schemes and kernel manifests, and the JSON run
report with its reproducibility manifest.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import MatrixFormatError
from .kem import FragmentScheme, KernelDensity
from .matrix import DenseSymMatrix
from .scatter import GaussianBasis, Reflection, ScatteringDataset

#: asymmetry accepted when reading matrix files (looser than in-memory construction)
READ_SYMMETRY_TOL = 1e-9

R_FACTOR_CONVENTION = "magnitude"

COMMANDS = ("purify", "fit", "assemble", "decompose", "cost", "density", "synthesize")


def write_matrix(matrix: DenseSymMatrix, path) -> None:
    lines = [f"dsm 1 {matrix.dim}"]
    for row in matrix.array:
        lines.append(" ".join(f"{value:.17g}" for value in row))
    Path(path).write_text("\n".join(lines) + "\n")


def read_matrix(path) -> DenseSymMatrix:
    path = Path(path)
    lines = path.read_text().splitlines()
    if not lines:
        raise MatrixFormatError(f"{path}: empty file")
    header = lines[0].split()
    if len(header) != 3 or header[0] != "dsm" or header[1] != "1":
        raise MatrixFormatError(
            f"{path}, line 1: expected header 'dsm 1 <dim>', got {lines[0]!r}"
        )
    try:
        dim = int(header[2])
    except ValueError as exc:
        raise MatrixFormatError(
            f"{path}, line 1: dimension is not an integer: {header[2]!r}"
        ) from exc
    if dim < 1:
        raise MatrixFormatError(f"{path}, line 1: dimension must be positive")
    rows = []
    for offset in range(dim):
        line_no = offset + 2
        if offset + 1 >= len(lines):
            raise MatrixFormatError(f"{path}: missing row {offset + 1} of {dim}")
        tokens = lines[offset + 1].split()
        if len(tokens) != dim:
            raise MatrixFormatError(
                f"{path}, line {line_no}: expected {dim} values, got {len(tokens)}"
            )
        try:
            rows.append([float(token) for token in tokens])
        except ValueError as exc:
            raise MatrixFormatError(
                f"{path}, line {line_no}: non-numeric token"
            ) from exc
    array = np.array(rows)
    if not np.all(np.isfinite(array)):
        raise MatrixFormatError(f"{path}: non-finite matrix entry")
    deviation = np.abs(array - array.T)
    excess = deviation - READ_SYMMETRY_TOL * np.maximum(1.0, np.abs(array))
    if np.any(excess > 0.0):
        i, j = np.unravel_index(int(np.argmax(excess)), array.shape)
        raise MatrixFormatError(
            f"{path}, line {i + 2}: entry ({i},{j})={array[i, j]!r} is asymmetric "
            f"against ({j},{i})={array[j, i]!r}"
        )
    return DenseSymMatrix(array, tol=READ_SYMMETRY_TOL)


def _read_json(path):
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise MatrixFormatError(f"{path}: invalid JSON: {exc}") from exc


def write_basis(basis: GaussianBasis, path) -> None:
    payload = [
        {"center": [float(x) for x in center], "exponent": float(exponent)}
        for center, exponent in zip(basis.centers, basis.exponents)
    ]
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def read_basis(path) -> GaussianBasis:
    payload = _read_json(path)
    if not isinstance(payload, list):
        raise MatrixFormatError(f"{path}: expected a JSON list of basis functions")
    try:
        return GaussianBasis((entry["center"], entry["exponent"]) for entry in payload)
    except (KeyError, TypeError, ValueError) as exc:
        raise MatrixFormatError(f"{path}: invalid basis entry: {exc}") from exc


def write_dataset(dataset: ScatteringDataset, path) -> None:
    payload = {
        "format": "scattering-dataset v1",
        "units": {"k": "bohr^-1", "center": "bohr"},
        "r_factor_convention": R_FACTOR_CONVENTION,
        "basis_label": dataset.basis_label,
        "reflections": [
            {
                "k": [float(x) for x in r.k],
                "f_re": r.f.real,
                "f_im": r.f.imag,
                "sigma": r.sigma,
            }
            for r in dataset.reflections
        ],
    }
    Path(path).write_text(
        json.dumps(payload, indent=2, sort_keys=True, allow_nan=False) + "\n"
    )


def read_dataset(path) -> ScatteringDataset:
    payload = _read_json(path)
    try:
        reflections = tuple(
            Reflection(
                k=(float(entry["k"][0]), float(entry["k"][1]), float(entry["k"][2])),
                f=complex(float(entry["f_re"]), float(entry["f_im"])),
                sigma=float(entry.get("sigma", 0.0)),
            )
            for entry in payload["reflections"]
        )
        return ScatteringDataset(reflections, str(payload.get("basis_label", "")))
    except (KeyError, TypeError, IndexError, ValueError) as exc:
        raise MatrixFormatError(f"{path}: invalid dataset: {exc}") from exc


def read_vectors(path) -> np.ndarray:
    """JSON list of 3-vectors (scattering vectors or grid points)."""
    payload = _read_json(path)
    try:
        array = np.array(payload, dtype=float)
    except (TypeError, ValueError) as exc:
        raise MatrixFormatError(f"{path}: expected a JSON list of 3-vectors") from exc
    if array.ndim != 2 or array.shape[1] != 3:
        raise MatrixFormatError(f"{path}: expected a JSON list of 3-vectors")
    return array


def read_scheme(path) -> FragmentScheme:
    payload = _read_json(path)
    try:
        return FragmentScheme(
            int(payload["full_dim"]),
            tuple(tuple(kernel) for kernel in payload["singles"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise MatrixFormatError(f"{path}: invalid fragment scheme: {exc}") from exc


def read_fragment_manifest(path):
    """Manifest JSON plus kernel matrix files -> (scheme, doubles, singles).

    Matrix files resolve relative to the manifest location.
    """
    path = Path(path)
    payload = _read_json(path)
    try:
        scheme = FragmentScheme(
            int(payload["full_dim"]),
            tuple(tuple(kernel) for kernel in payload["singles"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise MatrixFormatError(f"{path}: invalid fragment scheme: {exc}") from exc
    doubles, singles = [], []
    try:
        entries = payload["kernels"]
        for entry in entries:
            kind = entry["kind"]
            members = tuple(int(i) for i in entry["members"])
            matrix = read_matrix(path.parent / entry["matrix_file"])
            if kind == "single":
                index_map = scheme.single_kernels[members[0]]
            elif kind == "double":
                index_map = scheme.double_indices(*members)
            else:
                raise ValueError(f"unknown kernel kind {kind!r}")
            kernel = KernelDensity(kind, members, matrix, index_map)
            (singles if kind == "single" else doubles).append(kernel)
    except (KeyError, TypeError, IndexError, ValueError) as exc:
        raise MatrixFormatError(f"{path}: invalid kernel manifest: {exc}") from exc
    return scheme, doubles, singles


def write_fragment_manifest(scheme: FragmentScheme, kernels, directory, name="kernels.json"):
    """Write kernel matrices as DSM files plus the manifest JSON.

    Returns the manifest path.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    entries = []
    for kernel in kernels:
        if kernel.kind == "single":
            stem = f"single_{kernel.members[0]}"
        else:
            stem = f"double_{kernel.members[0]}_{kernel.members[1]}"
        filename = f"{stem}.dsm"
        write_matrix(kernel.r_local, directory / filename)
        entries.append(
            {
                "kind": kernel.kind,
                "members": list(kernel.members),
                "matrix_file": filename,
            }
        )
    payload = {
        "full_dim": scheme.full_dim,
        "singles": [list(kernel) for kernel in scheme.single_kernels],
        "kernels": entries,
    }
    manifest = directory / name
    manifest.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    return manifest


@dataclass(frozen=True)
class RunManifest:
    """Reproducibility record: the command, its inputs, options, and seed."""

    command: str
    inputs: dict
    options: dict
    seed: int
    version: str

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise ValueError(f"unknown command {self.command!r}")

    def to_dict(self) -> dict:
        return {
            "command": self.command,
            "inputs": dict(self.inputs),
            "options": dict(self.options),
            "seed": self.seed,
            "version": self.version,
        }


def _assert_finite(value, context: str) -> None:
    if isinstance(value, dict):
        for key, item in value.items():
            _assert_finite(item, f"{context}.{key}")
    elif isinstance(value, (list, tuple)):
        for index, item in enumerate(value):
            _assert_finite(item, f"{context}[{index}]")
    elif isinstance(value, float) and not math.isfinite(value):
        raise ValueError(f"non-finite value in {context}")


def _coerce_scalar(value):
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    raise TypeError(f"not JSON serializable: {value!r}")


def write_report(report: dict, path) -> None:
    """Write the JSON run report; refuses to write non-finite numbers."""
    _assert_finite(report, "report")
    Path(path).write_text(
        json.dumps(report, indent=2, sort_keys=True, allow_nan=False, default=_coerce_scalar)
        + "\n"
    )
