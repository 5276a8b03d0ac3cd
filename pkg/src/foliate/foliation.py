"""Leaf extraction and leafwise geometry for a closed-and-coclosed 2-cochain.

Given the potential of the field (a 0-cochain), level sets extracted by
marching tetrahedra are the symplectic leaves; each leaf triangle carries
the pulled-back 2-form value, induced area, and unit normal. The vector
field transverse to the leaves is reconstructed per tet by least-squares
from the four face integrals of the 2-cochain.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .dec import Cochain, Stars, codifferential
from .errors import DegenerateFormError, ParameterError
from .mesh import TetMesh

__all__ = [
    "PiecewiseVectorField",
    "LeafMesh",
    "reconstruct_R",
    "extract_leaf",
    "SymplecticArea",
    "symplectic_area",
    "MeanCurvatureResult",
    "mean_curvature",
    "kernel_decomposition_field",
    "tet_gradients",
    "export_obj",
    "export_vtk",
]


@dataclass
class PiecewiseVectorField:
    """Per-tet constant 3-vector field."""

    mesh: TetMesh
    values: np.ndarray  # (T, 3)
    fit_residuals: np.ndarray = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.mesh.n_tets, 3):
            raise ValueError("vector field needs one 3-vector per tet")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("vector field has non-finite entries")

    def norms(self):
        return np.linalg.norm(self.values, axis=1)


def fit_two_forms(mesh: TetMesh, omega: Cochain):
    """Least-squares constant 2-form per tet from its four face integrals."""
    if omega.degree != 2:
        raise ParameterError("expected a 2-cochain")
    vectors = mesh.face_area_vectors[mesh.tet_faces]
    values = omega.values[mesh.tet_faces]
    return _kernels.fit_constant_two_forms(vectors, values)


def reconstruct_R(mesh: TetMesh, stars: Stars, omega: Cochain) -> PiecewiseVectorField:
    """Per-tet field dual to minus the star of a closed-and-coclosed 2-cochain.

    Fits a constant 2-form to each tet's face integrals (an overdetermined
    4x3 system whose residual doubles as an error detector) and flips sign:
    under the flat per-tet metric the star of the fitted 2-form has the
    same coefficients, so the field is minus the fitted coefficient vector.
    Warns when the input is visibly non-closed/non-coclosed or the fit
    residual exceeds 10% of the local scale.
    """
    w, resid = fit_two_forms(mesh, omega)
    scale = float(np.max(np.abs(omega.values), initial=0.0))
    if scale > 0:
        d_omega = mesh.coboundary(2) @ omega.values
        closed = float(np.max(np.abs(d_omega))) / scale
        if stars is not None:
            delta = codifferential(mesh, stars, 2)
            coclosed = float(np.max(np.abs(delta @ omega.values))) / scale
        else:
            coclosed = 0.0
        if max(closed, coclosed) > 1e-6:
            warnings.warn(
                f"2-cochain is not closed/coclosed to 1e-6 "
                f"(d: {closed:.2e}, delta: {coclosed:.2e}); "
                "reconstruction assumes a source-free field",
                stacklevel=2,
            )
        face_scale = np.max(np.abs(omega.values[mesh.tet_faces]), axis=1)
        bad = np.nonzero(resid > 0.1 * (face_scale + 1e-300))[0]
        if len(bad):
            warnings.warn(
                f"2-form fit residual above 10% in {len(bad)} tets, e.g. "
                f"{bad[:10].tolist()}",
                stacklevel=2,
            )
    return PiecewiseVectorField(mesh, -w, fit_residuals=resid)


def tet_gradients(mesh: TetMesh, values) -> np.ndarray:
    """Gradient of the piecewise-linear interpolant of vertex values, per tet."""
    tc = mesh.tet_coords
    M = np.stack([tc[:, i] - tc[:, 0] for i in (1, 2, 3)], axis=1)
    f = values[mesh.tets]
    rhs = f[:, 1:] - f[:, :1]
    return np.linalg.solve(M, rhs[:, :, None])[:, :, 0]


@dataclass
class LeafMesh:
    """Triangulated level-set surface with leafwise data per triangle."""

    mesh: TetMesh
    level: float
    vertices: np.ndarray  # (n, 3)
    triangles: np.ndarray  # (m, 3) indices into vertices
    host_tet: np.ndarray  # (m,)
    pulled_omega: np.ndarray  # (m,) integral of the 2-form over the triangle
    areas: np.ndarray  # (m,)
    normals: np.ndarray  # (m, 3) unit, oriented with the 2-form
    field_norm: np.ndarray  # (m,) |field| on the host tet
    watertight: bool
    vertex_edges: np.ndarray = None  # (n, 2) mesh edge (lo, hi) carrying each vertex
    degeneracy_note: str = ""

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_triangles(self):
        return len(self.triangles)

    def edge_set(self):
        t = self.triangles
        e = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [0, 2]]])
        return np.unique(np.sort(e, axis=1), axis=0)

    @property
    def euler_characteristic(self):
        return self.n_vertices - len(self.edge_set()) + self.n_triangles

    def total_area(self):
        return float(self.areas.sum())


def extract_leaf(mesh: TetMesh, phi: Cochain, level: float) -> LeafMesh:
    """Marching-tetrahedra level set of a vertex potential.

    Leaf vertices sit on mesh edges where the potential crosses the level
    (linear interpolation); triangles are oriented so their normals point
    along the potential gradient of the host tet, the orientation induced
    by the field 2-form. A level colliding with a vertex value is nudged
    by 1e-10 of the range.
    """
    if phi.degree != 0:
        raise ParameterError("leaf extraction needs a 0-cochain potential")
    vals = phi.values
    lo, hi = float(vals.min()), float(vals.max())
    if not lo < level < hi:
        raise ParameterError(
            f"level {level} not strictly inside the potential range "
            f"[{lo}, {hi}]" + (" (constant potential)" if lo == hi else "")
        )
    note = ""
    rng = hi - lo
    if np.min(np.abs(vals - level)) < 1e-12 * rng:
        level = level + 1e-10 * rng
        note = "level collided with a vertex value; perturbed by 1e-10 * range"
        if not lo < level < hi:
            raise ParameterError("perturbed level left the potential range")

    keys, pos, host = _kernels.marching_tets(mesh.tet_coords, mesh.tets, vals, level)
    if len(host) == 0:
        raise ParameterError("level set is empty")
    flat_keys = keys[:, :, 0].astype(np.int64) * mesh.n_vertices + keys[:, :, 1]
    uniq, first, inverse = np.unique(
        flat_keys.ravel(), return_index=True, return_inverse=True
    )
    vertices = pos.reshape(-1, 3)[first]
    vertex_edges = keys.reshape(-1, 2)[first]
    triangles = inverse.reshape(-1, 3)

    grads = tet_gradients(mesh, vals)
    w_host = grads[host]  # 2-form coefficients of the field on the host tet
    q = vertices[triangles]
    n = 0.5 * np.cross(q[:, 1] - q[:, 0], q[:, 2] - q[:, 0])
    flip = np.einsum("ti,ti->t", n, w_host) < 0
    triangles[flip] = triangles[flip][:, [0, 2, 1]]
    n[flip] *= -1.0

    areas = np.linalg.norm(n, axis=1)
    ok = areas > 0
    if not ok.all():  # degenerate slivers from near-vertex cuts
        triangles, host, n, areas, w_host = (
            triangles[ok], host[ok], n[ok], areas[ok], w_host[ok],
        )
    pulled = np.einsum("ti,ti->t", w_host, n)
    normals = n / areas[:, None]

    e = np.concatenate(
        [triangles[:, [0, 1]], triangles[:, [1, 2]], triangles[:, [0, 2]]]
    )
    e = np.sort(e, axis=1)
    _, counts = np.unique(e, axis=0, return_counts=True)
    watertight = bool(np.all(counts == 2))

    return LeafMesh(
        mesh=mesh,
        level=float(level),
        vertices=vertices,
        triangles=triangles,
        host_tet=host,
        pulled_omega=pulled,
        areas=areas,
        normals=normals,
        field_norm=np.linalg.norm(w_host, axis=1),
        watertight=watertight,
        vertex_edges=vertex_edges,
        degeneracy_note=note,
    )


@dataclass
class SymplecticArea:
    """Leaf integral of the 2-form plus its area-times-field-norm cross-check."""

    value: float
    area_weighted: float

    def __float__(self):
        return self.value


def symplectic_area(leaf: LeafMesh) -> SymplecticArea:
    """Integral of the pulled-back 2-form over the leaf.

    The cross-check value integrates |field| against the induced area; the
    two agree to a few percent at the acceptance refinements because the
    2-form restricted to a leaf is the induced area form scaled by the
    field norm.
    """
    if not leaf.watertight:
        warnings.warn("leaf is not watertight; returning the open-surface integral",
                      stacklevel=2)
    return SymplecticArea(
        value=float(leaf.pulled_omega.sum()),
        area_weighted=float(np.dot(leaf.areas, leaf.field_norm)),
    )


@dataclass
class MeanCurvatureResult:
    """Signed mean curvature of a leaf under the normal opposite the field.

    ``vertex_values`` comes from half the divergence of the unit normal
    field; ``formula_vertex_values`` from the direct wedge/star expression
    in the field 2-form. The sign convention makes spheres around a point
    mass positively curved (1/r).
    """

    vertex_values: np.ndarray
    formula_vertex_values: np.ndarray
    triangle_values: np.ndarray
    formula_triangle_values: np.ndarray
    normal_convention: str = "normal = -field/|field| (outward for a positive mass)"

    def median(self):
        return float(np.median(self.vertex_values))

    def formula_median(self):
        return float(np.median(self.formula_vertex_values))


def mean_curvature(leaf: LeafMesh, R: PiecewiseVectorField) -> MeanCurvatureResult:
    """Mean curvature of a leaf, by two independent discretizations.

    Divergence route: half the discrete divergence (face-flux coboundary)
    of the normalized field -R/|R|. Formula route: half the inner product
    of the gradient of 1/|R| with the field 2-form. Both are evaluated on
    host tets and area-averaged to leaf vertices.
    """
    mesh = leaf.mesh
    norms = R.norms()
    scale = float(np.max(norms, initial=0.0))
    hosts = np.unique(leaf.host_tet)
    if np.any(norms[hosts] < 1e-10 * scale) or scale == 0.0:
        raise DegenerateFormError(
            "field vanishes on leaf host tets; curvature undefined"
        )
    good = norms > 1e-10 * scale
    nu = np.zeros_like(R.values)
    nu[good] = -R.values[good] / norms[good, None]

    # face flux of the unit normal field, averaged between incident tets
    fcount = np.zeros(mesh.n_faces)
    fsum = np.zeros((mesh.n_faces, 3))
    np.add.at(
        fcount,
        mesh.tet_faces.ravel(),
        np.repeat(good.astype(float), 4),
    )
    np.add.at(
        fsum,
        mesh.tet_faces.ravel(),
        np.broadcast_to(nu[:, None, :], (mesh.n_tets, 4, 3)).reshape(-1, 3),
    )
    avg = fsum / np.maximum(fcount, 1.0)[:, None]
    flux = np.einsum("fi,fi->f", avg, mesh.face_area_vectors)
    div = (mesh.coboundary(2) @ flux) / mesh.tet_volumes
    h_div = 0.5 * div

    # formula route: H = 0.5 * <grad(1/|R|), field 2-form>
    s_tet = np.zeros(mesh.n_tets)
    s_tet[good] = 1.0 / norms[good]
    vol_sum = np.zeros(mesh.n_vertices)
    s_sum = np.zeros(mesh.n_vertices)
    wvol = np.where(good, mesh.tet_volumes, 0.0)
    np.add.at(vol_sum, mesh.tets.ravel(), np.repeat(wvol, 4))
    np.add.at(s_sum, mesh.tets.ravel(), np.repeat(wvol * s_tet, 4))
    s_vertex = s_sum / np.maximum(vol_sum, 1e-300)
    grad_s = tet_gradients(mesh, s_vertex)
    h_formula = 0.5 * np.einsum("ti,ti->t", grad_s, -R.values)

    tri_div = h_div[leaf.host_tet]
    tri_formula = h_formula[leaf.host_tet]
    vertex_div = _average_to_vertices(leaf, tri_div)
    vertex_formula = _average_to_vertices(leaf, tri_formula)
    return MeanCurvatureResult(vertex_div, vertex_formula, tri_div, tri_formula)


def _average_to_vertices(leaf: LeafMesh, tri_values):
    num = np.zeros(leaf.n_vertices)
    den = np.zeros(leaf.n_vertices)
    w = np.repeat(leaf.areas * tri_values, 3)
    a = np.repeat(leaf.areas, 3)
    np.add.at(num, leaf.triangles.ravel(), w)
    np.add.at(den, leaf.triangles.ravel(), a)
    return num / np.maximum(den, 1e-300)


def kernel_decomposition_field(mesh: TetMesh, omega: Cochain, v: PiecewiseVectorField):
    """Per-tet split of a field into kernel-of-omega and leaf-tangent parts.

    The kernel of the reconstructed 2-form is the line it spans as a
    coefficient vector; the leaf-tangent part is the orthogonal complement
    under the flat per-tet metric. Parts sum to the input exactly.
    """
    w, _ = fit_two_forms(mesh, omega)
    wnorm = np.linalg.norm(w, axis=1)
    bad = np.nonzero(wnorm <= 1e-14 * (1.0 + wnorm))[0]
    if len(bad):
        raise DegenerateFormError(
            f"2-form vanishes on tets {bad[:10].tolist()}; kernel split undefined"
        )
    unit = w / wnorm[:, None]
    coeff = np.einsum("ti,ti->t", v.values, unit)
    parallel = coeff[:, None] * unit
    return (
        PiecewiseVectorField(mesh, parallel),
        PiecewiseVectorField(mesh, v.values - parallel),
    )


def export_obj(leaf: LeafMesh, path):
    """Wavefront OBJ export (vertices and faces only)."""
    with open(path, "w") as fh:
        fh.write("# level-set leaf\n")
        for v in leaf.vertices:
            fh.write(f"v {v[0]:.17g} {v[1]:.17g} {v[2]:.17g}\n")
        for t in leaf.triangles:
            fh.write(f"f {t[0] + 1} {t[1] + 1} {t[2] + 1}\n")


def export_vtk(leaf: LeafMesh, path, cell_fields=None):
    """Legacy ASCII VTK PolyData export with per-triangle scalar fields.

    Always writes the pulled-back 2-form and field norm; pass extra
    per-triangle arrays in ``cell_fields``.
    """
    fields = {"pulled_omega": leaf.pulled_omega, "field_norm": leaf.field_norm}
    fields.update(cell_fields or {})
    m = leaf.n_triangles
    with open(path, "w") as fh:
        fh.write("# vtk DataFile Version 3.0\n")
        fh.write("level-set leaf\n")
        fh.write("ASCII\nDATASET POLYDATA\n")
        fh.write(f"POINTS {leaf.n_vertices} double\n")
        for v in leaf.vertices:
            fh.write(f"{v[0]:.17g} {v[1]:.17g} {v[2]:.17g}\n")
        fh.write(f"POLYGONS {m} {4 * m}\n")
        for t in leaf.triangles:
            fh.write(f"3 {t[0]} {t[1]} {t[2]}\n")
        fh.write(f"CELL_DATA {m}\n")
        for name, values in fields.items():
            fh.write(f"SCALARS {name} double 1\nLOOKUP_TABLE default\n")
            for val in np.asarray(values, dtype=float):
                fh.write(f"{val:.17g}\n")
