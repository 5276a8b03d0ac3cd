"""Discrete differential operators on a tet mesh.

Integer coboundaries, diagonal Hodge stars from the piecewise-flat metric,
the codifferential (defined as the star-adjoint of the coboundary), Hodge
Laplacians, and the de Rham map sampling analytic fields onto cochains.

Cochain values are integrals of the corresponding smooth form over the
canonically oriented simplices, so the coboundary is exactly Stokes'
identity at the integer level.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from . import _kernels
from .errors import DegreeError, MeshQualityError, SingularityError
from .exterior import AnalyticField
from .mesh import TetMesh

__all__ = [
    "Cochain",
    "DiagonalStar",
    "Stars",
    "coboundary",
    "build_stars",
    "codifferential",
    "laplacian",
    "HodgeLaplacian",
    "integrate_form",
    "cochain_inner",
    "cochain_norm",
    "dump_operator",
]


@dataclass
class Cochain:
    """Real values on the oriented k-simplices of a mesh."""

    mesh: TetMesh
    degree: int
    values: np.ndarray

    def __post_init__(self):
        if self.degree not in (0, 1, 2, 3):
            raise DegreeError(f"cochain degree must be in 0..3, got {self.degree}")
        self.values = np.asarray(self.values, dtype=float)
        expect = self.mesh.n_simplices(self.degree)
        if self.values.shape != (expect,):
            raise DegreeError(
                f"degree-{self.degree} cochain needs {expect} values, "
                f"got shape {self.values.shape}"
            )

    @classmethod
    def zero(cls, mesh, degree):
        return cls(mesh, degree, np.zeros(mesh.n_simplices(degree)))

    def copy(self):
        return Cochain(self.mesh, self.degree, self.values.copy())

    def __add__(self, other):
        self._check(other)
        return Cochain(self.mesh, self.degree, self.values + other.values)

    def __sub__(self, other):
        self._check(other)
        return Cochain(self.mesh, self.degree, self.values - other.values)

    def __mul__(self, scalar):
        return Cochain(self.mesh, self.degree, self.values * float(scalar))

    __rmul__ = __mul__

    def _check(self, other):
        if other.mesh is not self.mesh or other.degree != self.degree:
            raise DegreeError("cochain mesh/degree mismatch")

    def d(self) -> "Cochain":
        """Coboundary (exterior derivative) of this cochain."""
        if self.degree >= 3:
            raise DegreeError("no degree-4 cochains on a 3-complex")
        return Cochain(
            self.mesh, self.degree + 1, self.mesh.coboundary(self.degree) @ self.values
        )


def coboundary(mesh: TetMesh, k: int) -> sp.csr_matrix:
    """Signed integer incidence matrix: k-cochains to (k+1)-cochains."""
    if k not in (0, 1, 2):
        raise DegreeError(f"coboundary degree must be 0, 1, or 2, got {k}")
    if k == 0:
        e = np.arange(mesh.n_edges)
        rows = np.repeat(e, 2)
        cols = mesh.edges.ravel()
        vals = np.tile([-1, 1], mesh.n_edges)
        return sp.csr_matrix(
            (vals, (rows, cols)), shape=(mesh.n_edges, mesh.n_vertices), dtype=np.int64
        )
    if k == 1:
        # edges of each face, resolved inside the face's representative tet
        # (robust on periodic meshes where vertex pairs can be ambiguous)
        rep = mesh.face_rep_tet
        slots = mesh.face_rep_slots  # canonical (ascending-id) order a, b, c
        eidx = _kernels.EDGE_INDEX_OF_SLOTS

        def eid(i, j):
            return mesh.tet_edges[rep, eidx[slots[:, i], slots[:, j]]]

        rows = np.repeat(np.arange(mesh.n_faces), 3)
        cols = np.stack([eid(1, 2), eid(0, 2), eid(0, 1)], axis=1).ravel()
        vals = np.tile([1, -1, 1], mesh.n_faces)
        return sp.csr_matrix(
            (vals, (rows, cols)), shape=(mesh.n_faces, mesh.n_edges), dtype=np.int64
        )
    rows = np.repeat(np.arange(mesh.n_tets), 4)
    cols = mesh.tet_faces.ravel()
    vals = mesh.tet_face_signs.ravel()
    return sp.csr_matrix(
        (vals, (rows, cols)), shape=(mesh.n_tets, mesh.n_faces), dtype=np.int64
    )


@dataclass
class DiagonalStar:
    """Diagonal discrete Hodge star for one degree: dual/primal measure ratios."""

    degree: int
    weights: np.ndarray

    def apply(self, values):
        return self.weights * values

    def apply_inverse(self, values):
        return values / self.weights


class Stars:
    """Diagonal stars for all degrees 0..3 plus the construction used."""

    def __init__(self, weights, construction):
        self.weights = [np.asarray(w, dtype=float) for w in weights]
        self.construction = construction

    def __getitem__(self, k) -> DiagonalStar:
        return DiagonalStar(k, self.weights[k])

    def inner_matrix(self, k) -> sp.dia_matrix:
        return sp.diags(self.weights[k])


# simplices whose circumcentric dual measure is not clearly positive fall
# back to this fraction of their barycentric measure: positive (so the star
# inner product stays definite) yet small enough not to re-introduce the
# spurious couplings that full-size barycentric measures create on meshes
# with co-spherical point clusters (layered shells, cube splits)
_FALLBACK_FRACTION = 1e-8


def build_stars(mesh: TetMesh) -> Stars:
    """Diagonal Hodge stars from circumcentric duals, positivity-guarded.

    Signed circumcentric dual measures are the consistent choice but can
    vanish or go negative off well-centered meshes; any such simplex falls
    back, individually, to a small positive multiple of its barycentric
    dual measure. On a well-centered mesh the result is purely
    circumcentric.
    """
    args = (
        mesh.tet_coords,
        mesh.tets,
        mesh.tet_faces,
        mesh.tet_edges,
        mesh.n_vertices,
        mesh.n_edges,
        mesh.n_faces,
    )
    circ = _kernels.dual_measures_circumcentric(*args)
    bary = _kernels.dual_measures_barycentric(*args)
    fallbacks = 0
    measures = []
    for c, b in zip(circ, bary):
        keep = c > 1e-10 * b
        fallbacks += int(np.sum(~keep))
        measures.append(np.where(keep, c, _FALLBACK_FRACTION * b))
    construction = (
        "circumcentric"
        if fallbacks == 0
        else f"circumcentric ({fallbacks} barycentric fallbacks)"
    )
    weights = [
        measures[0],
        measures[1] / mesh.edge_lengths,
        measures[2] / mesh.face_areas,
        1.0 / mesh.tet_volumes,
    ]
    for k, w in enumerate(weights):
        bad = np.nonzero(~(w > 0.0))[0]
        if len(bad):
            raise MeshQualityError(
                f"non-positive degree-{k} star weight at simplex ids "
                f"{bad[:10].tolist()} after fallback"
            )
    return Stars(weights, construction)


def codifferential(mesh: TetMesh, stars: Stars, k: int) -> sp.csr_matrix:
    """Adjoint of the coboundary under the star inner products, as a matrix.

    Maps k-cochains to (k-1)-cochains with <d a, b> == <a, delta b> for all
    cochains a, b. Degree 0 returns the zero operator.
    """
    if k == 0:
        n = mesh.n_vertices
        return sp.csr_matrix((n, n))
    d = mesh.coboundary(k - 1).astype(float)
    s_hi = stars.weights[k]
    s_lo = stars.weights[k - 1]
    return sp.diags(1.0 / s_lo) @ d.T @ sp.diags(s_hi)


@dataclass
class HodgeLaplacian:
    """Hodge Laplacian of one degree in weak (weighted) form.

    ``weak`` is the symmetric positive semidefinite matrix S_k L_k; the
    operator itself is ``apply`` = S_k^{-1} weak, self-adjoint under the
    star inner product. Eigenproblems use the pencil (weak, mass).
    """

    degree: int
    weak: sp.csr_matrix
    mass: np.ndarray

    def apply(self, values):
        return (self.weak @ values) / self.mass

    @property
    def shape(self):
        return self.weak.shape


def laplacian(mesh: TetMesh, stars: Stars, k: int) -> HodgeLaplacian:
    """Hodge Laplacian (up + down) on k-cochains, in weak form."""
    if k not in (0, 1, 2, 3):
        raise DegreeError(f"laplacian degree must be in 0..3, got {k}")
    n = mesh.n_simplices(k)
    A = sp.csr_matrix((n, n))
    if k <= 2:
        d = mesh.coboundary(k).astype(float)
        A = A + d.T @ sp.diags(stars.weights[k + 1]) @ d
    if k >= 1:
        d = mesh.coboundary(k - 1).astype(float)
        Sk = sp.diags(stars.weights[k])
        A = A + Sk @ d @ sp.diags(1.0 / stars.weights[k - 1]) @ d.T @ Sk
    A = (A + A.T) * 0.5
    return HodgeLaplacian(k, A.tocsr(), stars.weights[k])


def cochain_inner(a: Cochain, b: Cochain, stars: Stars) -> float:
    """Star-weighted inner product of two cochains of equal degree."""
    a._check(b)
    return float(np.dot(a.values * stars.weights[a.degree], b.values))


def cochain_norm(a: Cochain, stars: Stars) -> float:
    return float(np.sqrt(max(cochain_inner(a, a, stars), 0.0)))


def _guard_singularities(field, points, diameters, what):
    if not field.singularities:
        return
    for s in field.singularities:
        dist = np.linalg.norm(points - np.asarray(s, float), axis=1)
        bad = np.nonzero(dist <= diameters)[0]
        if len(bad):
            raise SingularityError(
                f"{what} {bad[:10].tolist()} touch a declared singularity"
            )


def integrate_form(field: AnalyticField, mesh: TetMesh, k: int) -> Cochain:
    """De Rham map: sample the analytic field onto k-simplices.

    Midpoint (centroid) quadrature with affine pullback; exact for fields
    with affine coefficients.
    """
    if field.degree != k:
        raise DegreeError(f"field degree {field.degree} != requested degree {k}")
    if k == 0:
        pts = mesh.vertices
        _guard_singularities(field, pts, np.zeros(len(pts)), "vertices")
        vals = np.array([field.fn(p) for p in pts], dtype=float).reshape(-1)
    elif k == 1:
        pts = mesh.edge_midpoints
        _guard_singularities(field, pts, 0.5 * mesh.edge_lengths, "edges")
        samples = np.array([field.fn(p) for p in pts], dtype=float)
        vals = np.einsum("ei,ei->e", samples, mesh.edge_vectors)
    elif k == 2:
        pts = mesh.face_centroids
        fc = mesh.coords_of_faces()
        diam = np.linalg.norm(fc - pts[:, None, :], axis=2).max(axis=1)
        _guard_singularities(field, pts, diam, "faces")
        samples = np.array([field.fn(p) for p in pts], dtype=float)
        vals = np.einsum("fi,fi->f", samples, mesh.face_area_vectors)
    else:
        pts = mesh.tet_centroids
        diam = np.linalg.norm(mesh.tet_coords - pts[:, None, :], axis=2).max(axis=1)
        _guard_singularities(field, pts, diam, "tets")
        samples = np.array([field.fn(p) for p in pts], dtype=float).reshape(-1)
        vals = samples * mesh.tet_volumes
    return Cochain(mesh, k, vals)


def dump_operator(matrix, path):
    """Write a sparse operator as 'row col value' text triples."""
    coo = sp.coo_matrix(matrix)
    with open(path, "w") as fh:
        fh.write(f"# shape {coo.shape[0]} {coo.shape[1]}\n")
        for r, c, v in zip(coo.row, coo.col, coo.data):
            fh.write(f"{r} {c} {v:.17g}\n")
