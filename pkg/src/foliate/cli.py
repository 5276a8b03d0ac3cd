"""Command-line entry point: fixtures, solves, extractions, and reports.

Every subcommand writes a JSON report (schema 1) that embeds the config it
ran from; identical configs give byte-identical reports except for the
``timestamp`` field. Diagnostics go to stderr. Exit codes: 0 success,
1 validation error, 2 numerical non-convergence.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time

import numpy as np

from .errors import ConvergenceError, FoliateError

SCHEMA = 1


def _thread_cap():
    cap = os.environ.get("FOLIATE_THREADS")
    if not cap:
        return None
    try:
        n = max(1, int(cap))
    except ValueError:
        return None
    try:
        import numba

        numba.set_num_threads(n)
    except Exception:
        pass
    return n


def _emit(report, args):
    text = json.dumps(report, sort_keys=True, indent=2) + "\n"
    if getattr(args, "out", None):
        with open(args.out, "w") as fh:
            fh.write(text)
        print(f"report written to {args.out}", file=sys.stderr)
    else:
        sys.stdout.write(text)


def _report(command, config, results):
    return {
        "schema": SCHEMA,
        "command": command,
        "config": config,
        "results": results,
        "timestamp": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
    }


def _build_mesh(args):
    from .mesh import generate_flat_torus, generate_shell

    if args.mesh == "torus":
        return generate_flat_torus(args.n), {"kind": "torus", "n": args.n}
    mesh = generate_shell(args.r_inner, args.r_outer, args.refine)
    return mesh, {
        "kind": "shell",
        "r_inner": args.r_inner,
        "r_outer": args.r_outer,
        "refinement": args.refine,
    }


def _add_mesh_args(p, default="shell"):
    p.add_argument("--mesh", choices=["torus", "shell"], default=default)
    p.add_argument("--n", type=int, default=3, help="torus subdivisions per axis")
    p.add_argument("--r-inner", type=float, default=1.0)
    p.add_argument("--r-outer", type=float, default=2.0)
    p.add_argument("--refine", type=int, default=1, help="shell refinement level")


def _newton_fixture(args):
    from .dec import build_stars
    from .gravity import SourceSpec, solve_poisson
    from .mesh import generate_shell

    mesh = generate_shell(args.r_inner, args.r_outer, args.refine)
    stars = build_stars(mesh)
    sol = solve_poisson(mesh, stars, SourceSpec.from_boundary_flux([args.m0]), args.tol)
    return mesh, stars, sol


def cmd_gen_mesh(args):
    from .mesh import save_mesh

    mesh, cfg = _build_mesh(args)
    save_mesh(mesh, args.out_mesh)
    results = {
        "vertices": mesh.n_vertices,
        "edges": mesh.n_edges,
        "faces": mesh.n_faces,
        "tets": mesh.n_tets,
        "boundary_faces": int(len(mesh.boundary_faces)),
        "euler_characteristic": int(mesh.euler_characteristic),
        "path": args.out_mesh,
    }
    _emit(_report("gen-mesh", cfg, results), args)
    return 0


def cmd_betti(args):
    from .hodge import betti_numbers

    mesh, cfg = _build_mesh(args)
    b = betti_numbers(mesh)
    _emit(_report("betti", cfg, {"betti": list(b)}), args)
    return 0


def cmd_harmonic(args):
    from .dec import build_stars
    from .hodge import harmonic_basis, save_harmonic_basis

    mesh, cfg = _build_mesh(args)
    cfg["k"] = args.k
    stars = build_stars(mesh)
    basis = harmonic_basis(mesh, stars, args.k, tol=args.tol)
    if args.export_basis:
        save_harmonic_basis(basis, args.export_basis)
    results = {
        "dimension": len(basis),
        "eigenvalues": [float(v) for v in basis.eigenvalues],
        "gap_ratio": float(basis.gap_ratio),
        "d_residual_max": float(np.max(basis.d_residuals, initial=0.0)),
        "delta_residual_max": float(np.max(basis.delta_residuals, initial=0.0)),
    }
    _emit(_report("harmonic", cfg, results), args)
    return 0


def cmd_poisson(args):
    from .gravity import run_experiment

    if args.config:
        with open(args.config) as fh:
            config = json.load(fh)
    else:
        config = {
            "mesh": {
                "kind": "shell",
                "r_inner": args.r_inner,
                "r_outer": args.r_outer,
                "refinement": args.refine,
            },
            "source": {"mode": "boundary_flux", "masses": [args.m0]},
            "tol": args.tol,
            "outputs": ["fluxes", "newton_error"],
        }
    results = run_experiment(config)
    _emit(_report("poisson", config, results), args)
    return 0


def cmd_flux(args):
    from .gravity import gaussian_flux
    from .mesh import gaussian_sphere

    mesh, _, sol = _newton_fixture(args)
    cfg = {
        "m0": args.m0,
        "refinement": args.refine,
        "radii": args.radii,
        "tol": args.tol,
    }
    fluxes = {
        f"{r:.6g}": gaussian_flux(sol.omega, gaussian_sphere(mesh, r))
        for r in args.radii
    }
    spread = max(fluxes.values()) - min(fluxes.values()) if fluxes else 0.0
    _emit(_report("flux", cfg, {"flux": fluxes, "spread": spread}), args)
    return 0


def cmd_newton(args):
    from .gravity import gaussian_flux, newton_field_error
    from .mesh import gaussian_sphere

    mesh, _, sol = _newton_fixture(args)
    cfg = {"m0": args.m0, "refinement": args.refine, "tol": args.tol}
    radii = [1.25, 1.5, 1.75]
    span = mesh.metadata["layer_radii"]
    radii = [float(np.clip(r, span[1], span[-2])) for r in radii]
    fluxes = {
        f"{r:.6g}": gaussian_flux(sol.omega, gaussian_sphere(mesh, r)) for r in radii
    }
    results = {
        "flux": fluxes,
        "flux_max_error": max(abs(v - args.m0) for v in fluxes.values()),
        "field_l2_error": newton_field_error(mesh, sol.R, args.m0),
        "solver_iterations": sol.report.iterations,
    }
    _emit(_report("newton", cfg, results), args)
    return 0


def cmd_leaves(args):
    from .foliation import export_obj, export_vtk, extract_leaf, mean_curvature, symplectic_area

    mesh, _, sol = _newton_fixture(args)
    cfg = {
        "m0": args.m0,
        "refinement": args.refine,
        "level_count": args.level_count,
        "tol": args.tol,
    }
    phi = sol.phi
    qs = np.linspace(0.2, 0.8, args.level_count)
    levels = np.quantile(phi.values, qs)
    leaves = []
    for i, level in enumerate(levels):
        leaf = extract_leaf(mesh, phi, float(level))
        area = symplectic_area(leaf)
        entry = {
            "level": float(level),
            "watertight": leaf.watertight,
            "euler_characteristic": int(leaf.euler_characteristic),
            "symplectic_area": area.value,
            "area_weighted": area.area_weighted,
        }
        if args.curvature:
            mc = mean_curvature(leaf, sol.R)
            entry["median_curvature"] = mc.median()
            entry["median_curvature_formula"] = mc.formula_median()
        if args.export:
            path = args.export % i if "%" in args.export else f"{args.export}.{i}.obj"
            if path.endswith(".vtk"):
                export_vtk(leaf, path)
            else:
                export_obj(leaf, path)
            entry["path"] = path
        leaves.append(entry)
    _emit(_report("leaves", cfg, {"leaves": leaves}), args)
    return 0


def cmd_shell_theorem(args):
    from .gravity import shell_theorem_check
    from .mesh import generate_shell

    mesh = generate_shell(args.r_inner, args.r_outer, args.refine)
    rep = shell_theorem_check(mesh, args.m0, args.tol)
    cfg = {"m0": args.m0, "refinement": args.refine, "tol": args.tol}
    results = {
        "flux_point": rep.flux_point,
        "flux_density": rep.flux_density,
        "flux_difference": rep.flux_difference,
        "field_l2_difference": rep.field_l2_difference,
        "passed": rep.passed,
    }
    _emit(_report("shell-theorem", cfg, results), args)
    return 0


def cmd_linearity(args):
    from .gravity import SourceSpec, linearity_check
    from .mesh import generate_shell

    mesh = generate_shell(args.r_inner, args.r_outer, args.refine)
    rep = linearity_check(
        mesh,
        SourceSpec.from_boundary_flux([args.m1]),
        SourceSpec.from_boundary_flux([args.m2]),
        args.tol,
    )
    cfg = {"m1": args.m1, "m2": args.m2, "refinement": args.refine, "tol": args.tol}
    results = {
        "phi_deviation": rep.phi_deviation,
        "omega_deviation": rep.omega_deviation,
        "passed": rep.passed,
    }
    _emit(_report("linearity", cfg, results), args)
    return 0


def cmd_lemma_suite(args):
    from .exterior import property_suite

    results = property_suite(trials=args.trials, seed=args.seed)
    cfg = {"trials": args.trials, "seed": args.seed}
    _emit(_report("lemma-suite", cfg, results), args)
    return 0 if results["passed"] else 1


def build_parser():
    parser = argparse.ArgumentParser(
        prog="foliate",
        description="Harmonic 2-cochains, symplectic leaves, and flux-based "
        "gravity experiments on tetrahedral 3-manifolds.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--out", help="write the JSON report here")
        p.add_argument("--tol", type=float, default=1e-10)

    p = sub.add_parser("gen-mesh", help="generate a fixture mesh and save it")
    _add_mesh_args(p)
    p.add_argument("--out-mesh", required=True, help="node/ele text output path")
    common(p)
    p.set_defaults(fn=cmd_gen_mesh)

    p = sub.add_parser("betti", help="Betti numbers of a fixture mesh")
    _add_mesh_args(p, default="torus")
    common(p)
    p.set_defaults(fn=cmd_betti)

    p = sub.add_parser("harmonic", help="harmonic basis of one degree")
    _add_mesh_args(p, default="torus")
    p.add_argument("--k", type=int, default=1)
    p.add_argument("--export-basis", help="write the basis as text")
    common(p)
    p.set_defaults(fn=cmd_harmonic)

    p = sub.add_parser("poisson", help="flux-formulated Poisson experiment")
    p.add_argument("--config", help="JSON experiment config")
    _add_mesh_args(p)
    p.add_argument("--m0", type=float, default=1.0)
    common(p)
    p.set_defaults(fn=cmd_poisson)

    p = sub.add_parser("flux", help="gaussian fluxes of the point-source fixture")
    _add_mesh_args(p)
    p.add_argument("--m0", type=float, default=1.0)
    p.add_argument("--radii", type=float, nargs="+", default=[1.25, 1.5, 1.75])
    common(p)
    p.set_defaults(fn=cmd_flux)

    p = sub.add_parser("newton", help="inverse-square field reproduction check")
    _add_mesh_args(p)
    p.add_argument("--m0", type=float, default=1.0)
    common(p)
    p.set_defaults(fn=cmd_newton)

    p = sub.add_parser("leaves", help="extract level-set leaves of the potential")
    _add_mesh_args(p)
    p.add_argument("--m0", type=float, default=1.0)
    p.add_argument("--level-count", type=int, default=3)
    p.add_argument("--export", help="OBJ/VTK path pattern, e.g. leaf_%%d.obj")
    p.add_argument("--curvature", action="store_true", help="include mean curvature")
    common(p)
    p.set_defaults(fn=cmd_leaves)

    p = sub.add_parser("shell-theorem", help="point source vs spread source outside")
    _add_mesh_args(p)
    p.add_argument("--m0", type=float, default=1.0)
    common(p)
    p.set_defaults(fn=cmd_shell_theorem)

    p = sub.add_parser("linearity", help="superposition of two sources")
    _add_mesh_args(p)
    p.add_argument("--m1", type=float, default=1.0)
    p.add_argument("--m2", type=float, default=2.0)
    common(p)
    p.set_defaults(fn=cmd_linearity)

    p = sub.add_parser("lemma-suite", help="pointwise identity property battery")
    p.add_argument("--trials", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    common(p)
    p.set_defaults(fn=cmd_lemma_suite)

    return parser


def main(argv=None) -> int:
    _thread_cap()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 1 if exc.code not in (0, None) else 0
    try:
        return args.fn(args)
    except ConvergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FoliateError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
