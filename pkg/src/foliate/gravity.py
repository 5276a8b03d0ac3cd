"""Flux-formulated Poisson solves and the gravity experiments.

Sources are either a per-tet density 3-cochain or prescribed total fluxes
through interior boundary components (a point mass modeled as an excised
region). The potential solves the weak pure-Neumann problem; the field
2-cochain on primal faces is the gradient field averaged to faces and then
corrected by a star-weighted coexact projection so that its coboundary
equals the per-tet source masses to solver tolerance. That makes
flux-equals-enclosed-mass an identity of the integer chain pairing, limited
only by the linear-solver residual.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .dec import Cochain, Stars, build_stars
from .errors import CompatibilityError, ConvergenceError, CycleError, ParameterError
from .foliation import PiecewiseVectorField, reconstruct_R, tet_gradients
from .mesh import SurfaceCycle, TetMesh, gaussian_sphere
from .solve import SolveReport, solve_spsd

__all__ = [
    "SourceSpec",
    "GravitySolution",
    "solve_poisson",
    "gaussian_flux",
    "field_axiom_check",
    "FieldAxiomReport",
    "linearity_check",
    "shell_theorem_check",
    "de_rham_class_of_source",
    "newton_field_error",
    "run_experiment",
]


@dataclass
class SourceSpec:
    """Gravitational source description.

    ``density`` mode carries a 3-cochain of per-tet masses; ``boundary_flux``
    mode prescribes one total mass per interior boundary component (the
    excised-region model of a point source). ``total_mass`` is the exact sum
    of the data in either mode.
    """

    mode: str
    density: Cochain = None
    boundary_flux: np.ndarray = None
    total_mass: float = 0.0

    @classmethod
    def from_density(cls, density: Cochain):
        if density.degree != 3:
            raise ParameterError("density must be a 3-cochain of tet masses")
        return cls("density", density=density, total_mass=float(np.sum(density.values)))

    @classmethod
    def from_boundary_flux(cls, masses):
        masses = np.asarray(masses, dtype=float)
        return cls("boundary_flux", boundary_flux=masses, total_mass=float(np.sum(masses)))

    def __add__(self, other: "SourceSpec") -> "SourceSpec":
        if self.mode != other.mode:
            raise ParameterError("can only add sources of the same mode")
        if self.mode == "density":
            return SourceSpec.from_density(self.density + other.density)
        return SourceSpec.from_boundary_flux(self.boundary_flux + other.boundary_flux)

    def __neg__(self):
        if self.mode == "density":
            return SourceSpec.from_density(-1.0 * self.density)
        return SourceSpec.from_boundary_flux(-self.boundary_flux)


@dataclass
class GravitySolution:
    """Potential, field 2-cochain, its exact star partner, and the force field."""

    phi: Cochain
    omega: Cochain
    star_omega: Cochain
    R: PiecewiseVectorField
    report: SolveReport
    source: SourceSpec
    tet_masses: np.ndarray
    projection_report: SolveReport = None


def _ordered_boundary_components(mesh: TetMesh):
    """Boundary components as (list of inner, outer) face-id arrays.

    The enclosing (outer) component is the one with the largest total
    area; generated shells agree with their layer metadata.
    """
    comps = mesh.boundary_components()
    if not comps:
        return [], None
    areas = [float(mesh.face_areas[c].sum()) for c in comps]
    outer_idx = int(np.argmax(areas))
    inner = [c for i, c in enumerate(comps) if i != outer_idx]
    return inner, comps[outer_idx]


def _boundary_outward_signs(mesh: TetMesh):
    """Sign of each boundary face in the boundary of the all-tets chain."""
    vec = np.ones(mesh.n_tets, dtype=np.int64)
    return mesh.coboundary(2).T @ vec  # zero on interior faces


def _solid_angle_shares(mesh: TetMesh, face_ids):
    """Fraction of the full solid angle each face subtends from the component center.

    This is the flux distribution of an isotropic point field centered in
    the enclosed region, so prescribing fluxes with these shares reproduces
    the inverse-square field exactly on the boundary.
    """
    coords = mesh.coords_of_faces()[face_ids]
    center = coords.reshape(-1, 3).mean(axis=0)
    # for shell fixtures the enclosed center is the origin of the spheres
    if mesh.metadata.get("kind") == "shell":
        center = np.zeros(3)
    p = coords - center
    n0, n1, n2 = (np.linalg.norm(p[:, i], axis=1) for i in range(3))
    numer = np.abs(np.einsum("fi,fi->f", p[:, 0], np.cross(p[:, 1], p[:, 2])))
    denom = (
        n0 * n1 * n2
        + np.einsum("fi,fi->f", p[:, 0], p[:, 1]) * n2
        + np.einsum("fi,fi->f", p[:, 0], p[:, 2]) * n1
        + np.einsum("fi,fi->f", p[:, 1], p[:, 2]) * n0
    )
    omega = 2.0 * np.arctan2(numer, denom)
    return omega / omega.sum()


def _lump_to_vertices(mesh, face_ids, face_values, out):
    np.add.at(
        out,
        mesh.faces[face_ids].ravel(),
        np.repeat(face_values / 3.0, 3),
    )


def _face_counts(mesh):
    counts = np.bincount(mesh.tet_faces.ravel(), minlength=mesh.n_faces)
    return counts


def solve_poisson(mesh: TetMesh, stars: Stars, src: SourceSpec, tol: float = 1e-10) -> GravitySolution:
    """Solve the flux-formulated Poisson problem for a source.

    The potential is grounded at vertex 0 and solves the weak equation with
    the source loaded into dual cells (density) or onto interior boundary
    components (prescribed flux); the outer boundary carries the balancing
    outflow, area-weighted, which keeps the pure-Neumann system compatible.
    The returned 2-cochain satisfies ``d(omega) == tet masses`` to solver
    tolerance, so gaussian fluxes reproduce enclosed mass; its star partner
    is exactly ``d(phi)``.
    """
    if not tol > 0:
        raise ParameterError("tol must be positive")
    inner_comps, outer_comp = _ordered_boundary_components(mesh)
    outward = _boundary_outward_signs(mesh)

    tet_masses = np.zeros(mesh.n_tets)
    b = np.zeros(mesh.n_vertices)
    pinned_faces = []
    pinned_values = []

    if src.mode == "density":
        tet_masses = np.asarray(src.density.values, dtype=float).copy()
        np.add.at(b, mesh.tets.ravel(), np.repeat(-tet_masses / 4.0, 4))
        for comp in inner_comps:
            pinned_faces.append(comp)
            pinned_values.append(np.zeros(len(comp)))
    elif src.mode == "boundary_flux":
        masses = src.boundary_flux
        if len(masses) != len(inner_comps):
            raise CompatibilityError(
                f"{len(masses)} boundary fluxes prescribed but mesh has "
                f"{len(inner_comps)} interior boundary components"
            )
        for mass, comp in zip(masses, inner_comps):
            share = mass * _solid_angle_shares(mesh, comp)
            _lump_to_vertices(mesh, comp, -share, b)
            # canonical-orientation face values carrying the outward-radial flux
            pinned_faces.append(comp)
            pinned_values.append(-outward[comp] * share)
    else:
        raise ParameterError(f"unknown source mode {src.mode!r}")

    total = src.total_mass
    if outer_comp is not None:
        share = total * _solid_angle_shares(mesh, outer_comp)
        _lump_to_vertices(mesh, outer_comp, share, b)
        pinned_faces.append(outer_comp)
        pinned_values.append(outward[outer_comp] * share)
    elif abs(total) > 1e-12 * (1.0 + float(np.abs(tet_masses).sum())):
        raise CompatibilityError(
            f"closed mesh cannot absorb net mass {total}; total must vanish"
        )

    d0 = mesh.coboundary(0).astype(float)
    A = (d0.T @ sp.diags(stars.weights[1]) @ d0).tocsr()
    ones = np.ones(mesh.n_vertices)
    phi, report = solve_spsd(
        A, b, tol, kernel=[ones], constraint="ground", compat_tol=1e-8
    )
    if not report.converged:
        raise ConvergenceError(
            f"potential solve failed: residual {report.relative_residual:.3e} "
            f"after {report.iterations} iterations"
        )

    star_omega = Cochain(mesh, 1, d0 @ phi)
    omega, proj_report = _field_cochain(
        mesh, stars, phi, tet_masses, pinned_faces, pinned_values, tol
    )
    R = reconstruct_R(mesh, stars, omega)
    return GravitySolution(
        phi=Cochain(mesh, 0, phi),
        omega=omega,
        star_omega=star_omega,
        R=R,
        report=report,
        source=src,
        tet_masses=tet_masses,
        projection_report=proj_report,
    )


def _field_cochain(mesh, stars, phi, tet_masses, pinned_faces, pinned_values, tol):
    """Primal-face field 2-cochain with coboundary equal to the tet masses.

    Starts from the per-tet potential gradient averaged to faces, pins the
    boundary faces to their prescribed flux data, then applies the minimal
    star-weighted correction supported on interior faces that enforces the
    per-tet mass balance (a coexact adjustment, so the harmonic and exact
    content of the field is untouched).
    """
    grads = tet_gradients(mesh, phi)
    # inverse-distance interpolation of the two tet gradients at each face:
    # each tet gradient is most accurate at its centroid, so weight by the
    # opposite centroid's distance to the face plane
    dist = np.abs(
        np.einsum(
            "tfi,tfi->tf",
            mesh.tet_centroids[:, None, :] - mesh.face_centroids[mesh.tet_faces],
            mesh.face_area_vectors[mesh.tet_faces]
            / mesh.face_areas[mesh.tet_faces][..., None],
        )
    )
    wsum = np.zeros(mesh.n_faces)
    fsum = np.zeros((mesh.n_faces, 3))
    other = np.zeros(mesh.n_faces)
    np.add.at(other, mesh.tet_faces.ravel(), dist.ravel())
    w = (other[mesh.tet_faces] - dist) + np.where(
        _face_counts(mesh)[mesh.tet_faces] == 1, 1.0, 0.0
    )
    np.add.at(wsum, mesh.tet_faces.ravel(), w.ravel())
    np.add.at(
        fsum,
        mesh.tet_faces.ravel(),
        (w[..., None] * grads[:, None, :]).reshape(-1, 3),
    )
    target = np.einsum(
        "fi,fi->f", fsum / np.maximum(wsum, 1e-300)[:, None], mesh.face_area_vectors
    )
    for ids, vals in zip(pinned_faces, pinned_values):
        target[ids] = vals

    interior = np.ones(mesh.n_faces, dtype=bool)
    for ids in pinned_faces:
        interior[ids] = False
    d2 = mesh.coboundary(2).astype(float)
    r = d2 @ target - tet_masses
    scale = float(np.max(np.abs(tet_masses), initial=0.0)) + float(
        np.max(np.abs(target), initial=0.0)
    )
    if scale == 0.0 or float(np.linalg.norm(r)) <= 1e-13 * scale:
        return Cochain(mesh, 2, target), SolveReport(0, 0.0, True)

    d2_int = d2[:, interior].tocsr()
    K = (d2_int @ d2_int.T).tocsr()
    lam, rep = solve_spsd(
        K, r, tol, kernel=[np.ones(mesh.n_tets)], compat_tol=1e-6
    )
    if not rep.converged:
        raise ConvergenceError(
            f"field projection failed: residual {rep.relative_residual:.3e}"
        )
    correction = np.zeros(mesh.n_faces)
    correction[interior] = d2_int.T @ lam
    return Cochain(mesh, 2, target - correction), rep


def gaussian_flux(omega: Cochain, surface: SurfaceCycle) -> float:
    """Flux of a 2-cochain through an oriented surface cycle (chain pairing)."""
    if omega.degree != 2:
        raise ParameterError("flux needs a 2-cochain")
    if not isinstance(surface, SurfaceCycle):
        raise CycleError("flux surface must be a verified SurfaceCycle")
    return float(np.dot(omega.values[surface.face_ids], surface.signs))


@dataclass
class FieldAxiomReport:
    """Periods of the field's star partner over a basis of 1-cycles."""

    periods: np.ndarray
    max_abs_period: float
    satisfied: bool


def field_axiom_check(sol, cycle_basis, tol: float = 1e-8) -> FieldAxiomReport:
    """Check that the star of the field has vanishing 1-cycle integrals.

    Accepts a GravitySolution or a bare 1-cochain. Solutions produced by
    :func:`solve_poisson` satisfy the axiom identically because their star
    partner is a coboundary.
    """
    c = sol.star_omega if isinstance(sol, GravitySolution) else sol
    periods = np.array(
        [float(np.dot(c.values[cy.ids], cy.weights)) for cy in cycle_basis]
    )
    scale = float(np.max(np.abs(c.values), initial=0.0))
    max_abs = float(np.max(np.abs(periods), initial=0.0))
    return FieldAxiomReport(periods, max_abs, max_abs <= tol * max(1.0, scale))


@dataclass
class LinearityReport:
    phi_deviation: float
    omega_deviation: float
    tol: float
    passed: bool


def linearity_check(mesh, src1, src2, tol: float = 1e-10, stars=None) -> LinearityReport:
    """Superposition test: solving the summed source matches the summed solutions."""
    if stars is None:
        stars = build_stars(mesh)
    s1 = solve_poisson(mesh, stars, src1, tol)
    s2 = solve_poisson(mesh, stars, src2, tol)
    s12 = solve_poisson(mesh, stars, src1 + src2, tol)

    def rel(a, b_sum):
        denom = float(np.linalg.norm(a)) or 1.0
        return float(np.linalg.norm(a - b_sum)) / denom

    dphi = rel(s12.phi.values, s1.phi.values + s2.phi.values)
    domega = rel(s12.omega.values, s1.omega.values + s2.omega.values)
    bound = 10.0 * tol
    return LinearityReport(dphi, domega, tol, dphi <= bound and domega <= bound)


@dataclass
class ShellTheoremReport:
    flux_point: float
    flux_density: float
    flux_difference: float
    field_l2_difference: float
    passed: bool


def shell_theorem_check(mesh, m0: float, tol: float = 1e-10, stars=None) -> ShellTheoremReport:
    """Exterior equivalence of a point source and a ball of the same mass.

    Solves once with the mass prescribed as inner-boundary flux and once as
    a uniform density on the inner third of the shell; compares gaussian
    fluxes and the force field on the outer third.
    """
    meta = mesh.metadata
    if meta.get("kind") != "shell":
        raise ParameterError("shell theorem check needs a shell mesh")
    bands = meta["tet_band"]
    layers = int(bands.max()) + 1
    if layers < 3:
        raise ParameterError("need at least 3 radial zones")
    if stars is None:
        stars = build_stars(mesh)

    point = solve_poisson(mesh, stars, SourceSpec.from_boundary_flux([m0]), tol)

    support = bands < max(1, layers // 3)
    vols = mesh.tet_volumes
    density = np.where(support, vols, 0.0)
    density *= m0 / density.sum()
    spread = solve_poisson(
        mesh, stars, SourceSpec.from_density(Cochain(mesh, 3, density)), tol
    )

    radii = meta["layer_radii"]
    r_probe = radii[max(1, (2 * layers) // 3)] * (1 + 1e-9)
    sphere = gaussian_sphere(mesh, float(r_probe))
    f_point = gaussian_flux(point.omega, sphere)
    f_spread = gaussian_flux(spread.omega, sphere)

    outer = bands >= (2 * layers) // 3
    w = vols[outer]
    diff = point.R.values[outer] - spread.R.values[outer]
    denom = np.sqrt(np.sum(w * np.sum(point.R.values[outer] ** 2, axis=1)))
    l2 = float(np.sqrt(np.sum(w * np.sum(diff**2, axis=1))) / (denom or 1.0))

    flux_diff = abs(f_point - f_spread)
    passed = flux_diff <= 1e-8 * max(1.0, abs(m0)) and (
        l2 <= 0.05 if abs(m0) > 0 else True
    )
    return ShellTheoremReport(f_point, f_spread, flux_diff, l2, passed)


def de_rham_class_of_source(mesh, src, tol: float = 1e-10, stars=None) -> np.ndarray:
    """Class coefficients of the solution field over the 2-cycle homology basis.

    By the flux identity these equal the enclosed-mass vector of the source.
    """
    if stars is None:
        stars = build_stars(mesh)
    sol = solve_poisson(mesh, stars, src, tol)
    cycles = mesh.metadata.get("cycles_2", [])
    return np.array([gaussian_flux(sol.omega, cy) for cy in cycles])


def newton_field_error(mesh, R: PiecewiseVectorField, m0: float) -> float:
    """Volume-weighted relative L2 error of a field against the point-mass law."""
    p = mesh.tet_centroids
    r = np.linalg.norm(p, axis=1)
    exact = -(m0 / (4.0 * np.pi)) * p / r[:, None] ** 3
    w = mesh.tet_volumes
    num = np.sqrt(np.sum(w * np.sum((R.values - exact) ** 2, axis=1)))
    den = np.sqrt(np.sum(w * np.sum(exact**2, axis=1)))
    return float(num / den)


def run_experiment(config: dict) -> dict:
    """Config-driven experiment: build mesh + source, solve, report metrics.

    Config schema: ``{"mesh": {"kind": "shell"|"torus", ...params},
    "source": {"mode": "boundary_flux", "masses": [...]} |
    {"mode": "density", "total": m, "support": "inner_third"},
    "tol": float, "outputs": ["flux_radii", ...]}``.
    """
    from .mesh import generate_flat_torus, generate_shell

    mesh_cfg = dict(config.get("mesh", {}))
    kind = mesh_cfg.pop("kind", "shell")
    if kind == "shell":
        mesh = generate_shell(
            mesh_cfg.get("r_inner", 1.0),
            mesh_cfg.get("r_outer", 2.0),
            mesh_cfg.get("refinement", 1),
        )
    elif kind == "torus":
        mesh = generate_flat_torus(mesh_cfg.get("n", 3))
    else:
        raise ParameterError(f"unknown mesh kind {kind!r}")
    stars = build_stars(mesh)

    src_cfg = dict(config.get("source", {}))
    mode = src_cfg.get("mode", "boundary_flux")
    if mode == "boundary_flux":
        src = SourceSpec.from_boundary_flux(src_cfg.get("masses", [1.0]))
    elif mode == "density":
        total = float(src_cfg.get("total", 1.0))
        bands = mesh.metadata.get("tet_band")
        if src_cfg.get("support", "inner_third") == "inner_third" and bands is not None:
            mask = bands < max(1, (int(bands.max()) + 1) // 3)
        else:
            mask = np.ones(mesh.n_tets, dtype=bool)
        density = np.where(mask, mesh.tet_volumes, 0.0)
        density *= total / density.sum()
        src = SourceSpec.from_density(Cochain(mesh, 3, density))
    else:
        raise ParameterError(f"unknown source mode {mode!r}")

    tol = float(config.get("tol", 1e-10))
    sol = solve_poisson(mesh, stars, src, tol)
    results = {
        "solver": {
            "iterations": sol.report.iterations,
            "relative_residual": sol.report.relative_residual,
        },
        "total_mass": src.total_mass,
    }
    outputs = config.get("outputs", ["fluxes"])
    if "fluxes" in outputs and mesh.metadata.get("kind") == "shell":
        radii = mesh.metadata["layer_radii"]
        probes = [float(r) for r in np.quantile(radii, [0.25, 0.5, 0.75])]
        results["fluxes"] = {
            f"{r:.6g}": gaussian_flux(sol.omega, gaussian_sphere(mesh, r))
            for r in probes
        }
    if "newton_error" in outputs:
        results["newton_error"] = newton_field_error(mesh, sol.R, src.total_mass)
    if "class" in outputs:
        results["class"] = [
            gaussian_flux(sol.omega, cy) for cy in mesh.metadata.get("cycles_2", [])
        ]
    return results
