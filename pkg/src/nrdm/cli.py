"""Command-line interface tying the library into reproducible pipelines.

Subcommands: purify, fit, assemble, decompose, cost, density, synthesize.
Every run writes ``report.json`` (embedding its manifest) plus the command's
output files into ``--out-dir``; matrices use the DSM v1 text format.  Given
the same manifest and seed, output files are byte-identical.  Exit codes:
0 success, 2 parse or validation error, 3 non-convergence, 4 ill-conditioned
constraints.
"""

from __future__ import annotations

import argparse
import json
from pathlib import Path

from . import __version__
from .cost import (
    DEFAULT_ALPHA_VALUES,
    DEFAULT_M_VALUES,
    CostQuery,
    absolute_cost,
    kem_absolute_cost,
    plot_data_csv,
    relative_time,
    table_csv,
    table_sweep,
)
from .errors import (
    ConvergenceError,
    EigenSolverError,
    IllConditionedConstraintsError,
    MatrixFormatError,
    SingularOverlapError,
)
from .io import (
    R_FACTOR_CONVENTION,
    RunManifest,
    read_basis,
    read_dataset,
    read_fragment_manifest,
    read_matrix,
    read_scheme,
    read_vectors,
    write_dataset,
    write_matrix,
    write_report,
)
from .kem import assemble_r_kem, lowdin_initial_iterant, purify_assembled
from .matrix import DenseSymMatrix, fractional_power
from .purify import (
    ObservableConstraint,
    PurificationOptions,
    certify_projector,
    clinton_iterate,
    occupation_spectrum,
)
from .scatter import density_on_grid, fit_projector, overlap_matrix, synthesize_dataset
from .subspace import decompose, reassembly_residual

EXIT_OK = 0
EXIT_PARSE = 2
EXIT_NO_CONVERGENCE = 3
EXIT_ILL_CONDITIONED = 4


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nrdm",
        description="N-representable density matrices: purification, scattering "
        "fits, fragment assembly/decomposition, and the fragment cost model.",
    )
    parser.add_argument(
        "--version", action="version", version=f"%(prog)s {__version__}"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--out-dir", default=".", help="directory for outputs and report.json")
        p.add_argument("--tol-idem", type=float, default=1e-10, help="idempotency tolerance")
        p.add_argument("--tol-constraint", type=float, default=1e-10, help="constraint tolerance")
        p.add_argument("--max-iter", type=int, default=500, help="iteration budget")
        p.add_argument(
            "--regularization", type=float, default=1e-12,
            help="ridge term on the multiplier Gram system",
        )
        p.add_argument("--workers", type=int, default=1, help="threads for independent kernel tasks")
        p.add_argument("--seed", type=int, default=0, help="random seed, recorded in every report")

    purify = sub.add_parser("purify", help="drive a symmetric matrix to a constrained projector")
    common(purify)
    purify.add_argument("--matrix", required=True, help="DSM v1 start matrix")
    purify.add_argument(
        "--trace-target", type=float, required=True,
        help="target trace (occupied orbital count; electrons/2 for closed shells)",
    )
    purify.add_argument(
        "--constraint", action="append", default=[], metavar="FILE=TARGET",
        help="extra observable constraint, repeatable",
    )

    fit = sub.add_parser("fit", help="fit a projector to scattering data")
    common(fit)
    fit.add_argument("--dataset", required=True, help="scattering dataset JSON")
    fit.add_argument("--basis", required=True, help="Gaussian basis JSON")
    fit.add_argument("--trace-target", type=float, required=True)
    fit.add_argument("--p0", help="optional DSM v1 start matrix")

    synthesize = sub.add_parser("synthesize", help="generate structure factors from a projector")
    common(synthesize)
    synthesize.add_argument("--basis", required=True, help="Gaussian basis JSON")
    synthesize.add_argument("--projector", required=True, help="DSM v1 reference projector (orthonormal basis)")
    synthesize.add_argument("--kvectors", required=True, help="JSON list of scattering vectors")
    synthesize.add_argument("--noise-sigma", type=float, default=0.0)
    synthesize.add_argument("--basis-label", default="")

    assemble = sub.add_parser("assemble", help="assemble kernel densities and purify")
    common(assemble)
    assemble.add_argument("--manifest", required=True, help="kernel manifest JSON")
    assemble.add_argument("--overlap", help="DSM v1 overlap matrix (default: identity)")
    assemble.add_argument(
        "--trace-target", type=float, required=True,
        help="target trace (occupied orbital count; electrons/2 for closed shells)",
    )

    decomp = sub.add_parser("decompose", help="break a projector into subspace kernels")
    common(decomp)
    decomp.add_argument("--projector", required=True, help="DSM v1 projector")
    decomp.add_argument("--scheme", required=True, help="fragment scheme JSON")
    decomp.add_argument(
        "--strict-idempotency", action="store_true",
        help="additionally require each kernel to be idempotent",
    )

    cost = sub.add_parser("cost", help="fragment cost model tables and worked numbers")
    common(cost)
    cost.add_argument("--table", action="store_true", help="emit the relative-time table (default)")
    cost.add_argument("--plot-data", action="store_true", help="emit long-format (alpha, m, t_rel) rows")
    cost.add_argument("--m-values", default=",".join(str(m) for m in DEFAULT_M_VALUES))
    cost.add_argument("--alpha-values", default=",".join(f"{a:g}" for a in DEFAULT_ALPHA_VALUES))
    cost.add_argument("--direct", type=int, help="basis size for a direct-cost evaluation")
    cost.add_argument("--kem", metavar="M,MU", help="kernel count and kernel size for an absolute cost")
    cost.add_argument("--alpha", type=float, default=3.0, help="scaling exponent for --direct/--kem")

    density = sub.add_parser("density", help="evaluate the electron density on a grid")
    common(density)
    density.add_argument("--projector", required=True, help="DSM v1 projector (orthonormal basis)")
    density.add_argument("--basis", required=True, help="Gaussian basis JSON")
    density.add_argument("--grid", required=True, help="JSON list of grid points")

    return parser


_INPUT_KEYS = {
    "purify": ("matrix",),
    "fit": ("dataset", "basis", "p0"),
    "synthesize": ("basis", "projector", "kvectors"),
    "assemble": ("manifest", "overlap"),
    "decompose": ("projector", "scheme"),
    "cost": (),
    "density": ("projector", "basis", "grid"),
}


def _manifest(args: argparse.Namespace) -> RunManifest:
    inputs = {}
    for key in _INPUT_KEYS[args.command]:
        value = getattr(args, key, None)
        if value is not None:
            inputs[key] = str(value)
    options = {
        "idempotency_tolerance": args.tol_idem,
        "constraint_tolerance": args.tol_constraint,
        "max_iterations": args.max_iter,
        "multiplier_regularization": args.regularization,
        "workers": args.workers,
    }
    if args.command in ("purify", "fit", "assemble"):
        options["trace_target"] = args.trace_target
    if args.command == "purify":
        options["constraints"] = list(args.constraint)
    if args.command == "synthesize":
        options["noise_sigma"] = args.noise_sigma
        options["basis_label"] = args.basis_label
    if args.command == "decompose":
        options["strict_idempotency"] = bool(args.strict_idempotency)
    if args.command == "cost":
        options["m_values"] = [int(v) for v in str(args.m_values).split(",") if v]
        options["alpha_values"] = [float(v) for v in str(args.alpha_values).split(",") if v]
        options["table"] = bool(args.table)
        options["plot_data"] = bool(args.plot_data)
        options["alpha"] = args.alpha
        if args.direct is not None:
            options["direct"] = int(args.direct)
        if args.kem is not None:
            options["kem"] = str(args.kem)
    return RunManifest(
        command=args.command,
        inputs=inputs,
        options=options,
        seed=args.seed,
        version=__version__,
    )


def _purification_options(manifest: RunManifest) -> PurificationOptions:
    options = manifest.options
    return PurificationOptions(
        max_iterations=int(options["max_iterations"]),
        idempotency_tolerance=float(options["idempotency_tolerance"]),
        constraint_tolerance=float(options["constraint_tolerance"]),
        multiplier_regularization=float(options["multiplier_regularization"]),
    )


def _run_purify(manifest: RunManifest, out_dir: Path) -> dict:
    options = _purification_options(manifest)
    p0 = read_matrix(manifest.inputs["matrix"])
    constraints = []
    for spec in manifest.options.get("constraints", []):
        path, _, target = spec.rpartition("=")
        if not path:
            raise ValueError(f"bad constraint {spec!r}, expected FILE=TARGET")
        constraints.append(
            ObservableConstraint(read_matrix(path), float(target), Path(path).stem)
        )
    projector = clinton_iterate(
        p0, manifest.options["trace_target"], constraints, options
    )
    write_matrix(projector.P, out_dir / "projector.dsm")
    print(f"purify: converged in {projector.iterations_used} iterations")
    return {
        "iterations_used": projector.iterations_used,
        "residual_idempotency": projector.residual_idempotency,
        "residual_constraints": list(projector.residual_constraints),
        "trace": projector.P.trace(),
        "occupation_spectrum": [float(x) for x in occupation_spectrum(projector)],
        "outputs": {"projector": "projector.dsm"},
    }


def _run_fit(manifest: RunManifest, out_dir: Path) -> dict:
    dataset = read_dataset(manifest.inputs["dataset"])
    basis = read_basis(manifest.inputs["basis"])
    p0 = read_matrix(manifest.inputs["p0"]) if "p0" in manifest.inputs else None
    result = fit_projector(
        dataset,
        basis,
        manifest.options["trace_target"],
        p0,
        _purification_options(manifest),
    )
    write_matrix(result.projector.P, out_dir / "projector.dsm")
    print(
        f"fit: R = {result.r_factor:.3e} after "
        f"{result.projector.iterations_used} iterations"
    )
    return {
        "r_factor": result.r_factor,
        "r_factor_convention": R_FACTOR_CONVENTION,
        "iterations_used": result.projector.iterations_used,
        "residual_idempotency": result.projector.residual_idempotency,
        "n_constraints": result.n_constraints,
        "n_free_parameters": result.n_free_parameters,
        "underdetermined": result.underdetermined,
        "outputs": {"projector": "projector.dsm"},
    }


def _run_synthesize(manifest: RunManifest, out_dir: Path) -> dict:
    options = _purification_options(manifest)
    basis = read_basis(manifest.inputs["basis"])
    reference = certify_projector(
        read_matrix(manifest.inputs["projector"]),
        tolerance=options.idempotency_tolerance,
    )
    k_list = read_vectors(manifest.inputs["kvectors"])
    dataset = synthesize_dataset(
        reference,
        basis,
        k_list,
        noise_sigma=float(manifest.options["noise_sigma"]),
        rng=manifest.seed,
        basis_label=str(manifest.options.get("basis_label", "")),
    )
    write_dataset(dataset, out_dir / "dataset.json")
    print(f"synthesize: wrote {len(dataset.reflections)} reflections")
    return {
        "n_reflections": len(dataset.reflections),
        "noise_sigma": float(manifest.options["noise_sigma"]),
        "reference_trace": reference.P.trace(),
        "outputs": {"dataset": "dataset.json"},
    }


def _run_assemble(manifest: RunManifest, out_dir: Path) -> dict:
    options = _purification_options(manifest)
    scheme, doubles, singles = read_fragment_manifest(manifest.inputs["manifest"])
    if "overlap" in manifest.inputs:
        overlap = read_matrix(manifest.inputs["overlap"])
    else:
        overlap = DenseSymMatrix.identity(scheme.full_dim)
    r_kem = assemble_r_kem(scheme, doubles, singles)
    p0 = lowdin_initial_iterant(r_kem, overlap)
    projector = purify_assembled(p0, manifest.options["trace_target"], options)
    write_matrix(r_kem, out_dir / "r_kem.dsm")
    write_matrix(p0, out_dir / "initial_iterant.dsm")
    write_matrix(projector.P, out_dir / "projector.dsm")
    print(f"assemble: converged in {projector.iterations_used} iterations")
    return {
        "n_kernels": scheme.n,
        "r_kem_trace": r_kem.trace(),
        "initial_trace": p0.trace(),
        "iterations_used": projector.iterations_used,
        "residual_idempotency": projector.residual_idempotency,
        "residual_constraints": list(projector.residual_constraints),
        "occupation_spectrum": [float(x) for x in occupation_spectrum(projector)],
        "outputs": {
            "r_kem": "r_kem.dsm",
            "initial_iterant": "initial_iterant.dsm",
            "projector": "projector.dsm",
        },
    }


def _run_decompose(manifest: RunManifest, out_dir: Path) -> dict:
    options = _purification_options(manifest)
    projector = certify_projector(
        read_matrix(manifest.inputs["projector"]),
        tolerance=options.idempotency_tolerance,
    )
    scheme = read_scheme(manifest.inputs["scheme"])
    kernels = decompose(
        projector,
        scheme,
        options,
        strict_idempotency=bool(manifest.options.get("strict_idempotency", False)),
        workers=int(manifest.options.get("workers", 1)),
    )
    entries = []
    outputs = {}
    for kernel in kernels:
        if kernel.kind == "single":
            stem = f"single_{kernel.members[0]}"
            indices = scheme.single_kernels[kernel.members[0]]
        else:
            stem = f"double_{kernel.members[0]}_{kernel.members[1]}"
            indices = scheme.double_indices(*kernel.members)
        filename = f"{stem}.dsm"
        block = DenseSymMatrix(
            kernel.p_prime.array[[[i] for i in indices], indices]
        )
        write_matrix(block, out_dir / filename)
        outputs[stem] = filename
        entries.append(
            {
                "kind": kernel.kind,
                "members": list(kernel.members),
                "matrix_file": filename,
                "trace_target": kernel.trace_target,
                "trace_value": kernel.trace_value,
                "residual_subspace": kernel.residual_subspace,
                "iterations_used": kernel.iterations_used,
                "converged": kernel.converged,
                "failure": kernel.failure,
            }
        )
    manifest_payload = {
        "full_dim": scheme.full_dim,
        "singles": [list(kernel) for kernel in scheme.single_kernels],
        "kernels": [
            {"kind": e["kind"], "members": e["members"], "matrix_file": e["matrix_file"]}
            for e in entries
        ],
    }
    (out_dir / "kernels.json").write_text(
        json.dumps(manifest_payload, indent=2, sort_keys=True) + "\n"
    )
    failed = [e for e in entries if not e["converged"]]
    residual = reassembly_residual(projector, kernels, scheme.n)
    print(
        f"decompose: {len(entries) - len(failed)}/{len(entries)} kernels converged, "
        f"reassembly residual {residual:.3e}"
    )
    report = {
        "kernels": entries,
        "reassembly_residual": residual,
        "outputs": {"manifest": "kernels.json", **outputs},
    }
    if failed:
        report["exit_code"] = EXIT_NO_CONVERGENCE
        report["error"] = (
            f"{len(failed)} kernel(s) did not converge: "
            + ", ".join(str(e["members"]) for e in failed)
        )
    return report


def _run_cost(manifest: RunManifest, out_dir: Path) -> dict:
    options = manifest.options
    m_values = options["m_values"]
    alpha_values = options["alpha_values"]
    report: dict = {"outputs": {}}
    emit_table = options.get("table", False) or not (
        options.get("plot_data", False) or "direct" in options or "kem" in options
    )
    if emit_table:
        csv_text = table_csv(m_values, alpha_values)
        print(csv_text, end="")
        (out_dir / "cost_table.csv").write_text(csv_text)
        report["m_values"] = list(m_values)
        report["alpha_values"] = list(alpha_values)
        report["relative_times"] = [list(row) for row in table_sweep(m_values, alpha_values)]
        report["outputs"]["table"] = "cost_table.csv"
    if options.get("plot_data", False):
        csv_text = plot_data_csv(m_values, alpha_values)
        print(csv_text, end="")
        (out_dir / "cost_plot_data.csv").write_text(csv_text)
        report["outputs"]["plot_data"] = "cost_plot_data.csv"
    alpha = float(options.get("alpha", 3.0))
    if "direct" in options:
        direct = absolute_cost(int(options["direct"]), alpha)
        report["direct_cost"] = direct
        print(f"direct cost: {direct:.6e}")
    if "kem" in options:
        m_text, mu_text = str(options["kem"]).split(",")
        query = CostQuery(int(m_text), int(mu_text), alpha)
        kem_cost = kem_absolute_cost(query, workers=int(options.get("workers", 1)))
        report["kem_cost"] = kem_cost
        report["relative_time"] = relative_time(query.m, alpha)
        print(f"kernel cost: {kem_cost:.6e}")
        if "direct_cost" in report:
            report["cost_ratio"] = kem_cost / report["direct_cost"]
            print(f"cost ratio: {report['cost_ratio']:.6e}")
    return report


def _run_density(manifest: RunManifest, out_dir: Path) -> dict:
    options = _purification_options(manifest)
    basis = read_basis(manifest.inputs["basis"])
    projector = certify_projector(
        read_matrix(manifest.inputs["projector"]),
        tolerance=options.idempotency_tolerance,
    )
    grid = read_vectors(manifest.inputs["grid"])
    x = fractional_power(overlap_matrix(basis), -0.5)
    values = density_on_grid(projector, basis, x, grid)
    lines = ["x,y,z,density"]
    for point, value in zip(grid, values):
        lines.append(
            f"{point[0]:.17g},{point[1]:.17g},{point[2]:.17g},{value:.17g}"
        )
    (out_dir / "density.csv").write_text("\n".join(lines) + "\n")
    print(f"density: evaluated {len(values)} grid points")
    return {
        "n_points": int(len(values)),
        "min_density": float(values.min()),
        "max_density": float(values.max()),
        "outputs": {"density": "density.csv"},
    }


_HANDLERS = {
    "purify": _run_purify,
    "fit": _run_fit,
    "synthesize": _run_synthesize,
    "assemble": _run_assemble,
    "decompose": _run_decompose,
    "cost": _run_cost,
    "density": _run_density,
}


def run(manifest: RunManifest, out_dir) -> dict:
    """Execute a manifest; returns the report written beside the outputs."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    report = _HANDLERS[manifest.command](manifest, out_dir)
    report["manifest"] = manifest.to_dict()
    report.setdefault("exit_code", EXIT_OK)
    return report


def _fail(error: Exception, code: int) -> int:
    print(
        json.dumps(
            {"error": type(error).__name__, "message": str(error), "exit_code": code},
            sort_keys=True,
        )
    )
    return code


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    manifest = _manifest(args)
    out_dir = Path(args.out_dir)
    try:
        report = run(manifest, out_dir)
    except MatrixFormatError as error:
        return _fail(error, EXIT_PARSE)
    except IllConditionedConstraintsError as error:
        return _fail(error, EXIT_ILL_CONDITIONED)
    except (ConvergenceError, EigenSolverError) as error:
        return _fail(error, EXIT_NO_CONVERGENCE)
    except (SingularOverlapError, ValueError, OSError) as error:
        return _fail(error, EXIT_PARSE)
    write_report(report, out_dir / "report.json")
    exit_code = int(report.get("exit_code", EXIT_OK))
    if exit_code != EXIT_OK:
        print(
            json.dumps(
                {
                    "error": "KernelConvergence",
                    "message": report.get("error", "command failed"),
                    "exit_code": exit_code,
                },
                sort_keys=True,
            )
        )
    return exit_code


if __name__ == "__main__":
    raise SystemExit(main())
