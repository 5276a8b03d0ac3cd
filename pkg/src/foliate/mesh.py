"""Oriented tetrahedral complexes, model-geometry generators, chains, and I/O.

Conventions
-----------
* Tets keep their stored vertex order, which must have positive signed
  volume; faces and edges are identified with their ascending-id tuple and
  carry that canonical orientation. Incidence signs are relative to these
  representatives, so integer incidence matrices are reproducible.
* Periodic meshes (the flat torus) store per-tet unwrapped coordinates in
  ``tet_coords``; all geometry is computed from those, never from the
  wrapped vertex table. Slot 0 of every periodic tet is its lexicographic
  minimum corner, which makes minimum-image unwrapping at load time exact.

File format: a node section (count line, then ``id x y z``) followed by an
ele section (count line, then ``id v0 v1 v2 v3``); ``#`` starts a comment;
ids are 0-based. Periodic meshes carry a ``# periodic px py pz`` comment.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from ._kernels import LOCAL_EDGES, LOCAL_FACES
from .errors import CycleError, MeshValidationError, ParameterError, ParseError

__all__ = [
    "TetMesh",
    "Chain",
    "SurfaceCycle",
    "generate_flat_torus",
    "generate_box",
    "generate_shell",
    "gaussian_sphere",
    "single_tet",
    "save_mesh",
    "load_mesh",
]


def _sort_parity_rows(rows):
    """Sort small integer rows ascending; return sorted rows, order, and parity."""
    rows = np.asarray(rows)
    order = np.argsort(rows, axis=1, kind="stable")
    sorted_rows = np.take_along_axis(rows, order, axis=1)
    if rows.shape[1] == 2:
        parity = np.where(order[:, 0] == 0, 1, -1)
    else:
        # parity of a 3-permutation: +1 for even
        even = np.array([[0, 1, 2], [1, 2, 0], [2, 0, 1]])
        is_even = (order[:, None, :] == even[None, :, :]).all(axis=2).any(axis=1)
        parity = np.where(is_even, 1, -1)
    return sorted_rows, order, parity


def _quantize_wrapped(points, period):
    """Quantized fractional position modulo the period; collision-free key part.

    Periodic fixtures have simplex barycenters separated by at least 1/(6n)
    of the period, far above the 1e-9 quantization grid.
    """
    frac = np.mod(points, period) / period
    return np.rint(frac * 1e9).astype(np.int64) % 1_000_000_000


def _unique_rows(rows):
    """np.unique(axis=0) with first-occurrence indices and inverse."""
    rows = np.ascontiguousarray(rows)
    _, first, inverse = np.unique(
        rows, axis=0, return_index=True, return_inverse=True
    )
    return first, inverse.reshape(-1)


class TetMesh:
    """Oriented simplicial 3-complex with vertex positions and derived tables."""

    def __init__(self, vertices, tets, tet_coords=None, periodic=None, metadata=None):
        self.vertices = np.ascontiguousarray(vertices, dtype=float)
        self.tets = np.ascontiguousarray(tets, dtype=np.int64)
        if self.vertices.ndim != 2 or self.vertices.shape[1] != 3:
            raise MeshValidationError("vertices must be (V, 3)")
        if self.tets.ndim != 2 or self.tets.shape[1] != 4:
            raise MeshValidationError("tets must be (T, 4)")
        if self.tets.size and (
            self.tets.min() < 0 or self.tets.max() >= len(self.vertices)
        ):
            raise MeshValidationError("tet vertex ids out of range")
        self.periodic = None if periodic is None else np.asarray(periodic, dtype=float)
        if tet_coords is None:
            tet_coords = self.vertices[self.tets]
        self.tet_coords = np.ascontiguousarray(tet_coords, dtype=float)
        self.metadata = dict(metadata or {})
        self._build_tables()
        self._build_measures()
        self._incidence_cache = {}

    # -- construction -----------------------------------------------------

    def _build_tables(self):
        n_v = len(self.vertices)
        if n_v >= 2_000_000:
            raise MeshValidationError("mesh too large for int64 simplex keys")
        tets = self.tets
        vol = self.tet_volumes = (
            np.einsum(
                "ti,ti->t",
                self.tet_coords[:, 1] - self.tet_coords[:, 0],
                np.cross(
                    self.tet_coords[:, 2] - self.tet_coords[:, 0],
                    self.tet_coords[:, 3] - self.tet_coords[:, 0],
                ),
            )
            / 6.0
        )
        bad = np.nonzero(vol <= 0.0)[0]
        if len(bad):
            raise MeshValidationError(
                f"tets with non-positive volume under stored vertex order: "
                f"{bad[:20].tolist()}{'...' if len(bad) > 20 else ''}"
            )

        # faces: slot j is the face opposite local vertex j. On periodic
        # meshes distinct simplices can share a vertex tuple, so simplices
        # are identified by ids plus quantized wrapped barycenter there.
        face_rows = tets[:, LOCAL_FACES].reshape(-1, 3)
        sorted_faces, forder, parity = _sort_parity_rows(face_rows)
        boundary_sign = np.tile([1, -1, 1, -1], len(tets))
        face_signs = parity * boundary_sign
        if self.periodic is None:
            keys = (
                sorted_faces[:, 0] * n_v + sorted_faces[:, 1]
            ) * n_v + sorted_faces[:, 2]
            self._face_keys, first, inverse = np.unique(
                keys, return_index=True, return_inverse=True
            )
            inverse = inverse.reshape(-1)
        else:
            cent = self.tet_coords[:, LOCAL_FACES].mean(axis=2).reshape(-1, 3)
            q = _quantize_wrapped(cent, self.periodic)
            first, inverse = _unique_rows(np.concatenate([sorted_faces, q], axis=1))
            self._face_keys = None
        self.faces = sorted_faces[first]
        self.tet_faces = inverse.reshape(-1, 4)
        self.tet_face_signs = face_signs.reshape(-1, 4).astype(np.int64)
        self.face_rep_tet = (first // 4).astype(np.int64)
        local = LOCAL_FACES[first % 4]
        self.face_rep_slots = np.take_along_axis(local, forder[first], axis=1)

        # edges, in LOCAL_EDGES order per tet
        edge_rows = tets[:, LOCAL_EDGES].reshape(-1, 2)
        sorted_edges, eorder, _ = _sort_parity_rows(edge_rows)
        if self.periodic is None:
            ekeys = sorted_edges[:, 0] * n_v + sorted_edges[:, 1]
            self._edge_keys, efirst, einverse = np.unique(
                ekeys, return_index=True, return_inverse=True
            )
            einverse = einverse.reshape(-1)
        else:
            mid = self.tet_coords[:, LOCAL_EDGES].mean(axis=2).reshape(-1, 3)
            q = _quantize_wrapped(mid, self.periodic)
            efirst, einverse = _unique_rows(np.concatenate([sorted_edges, q], axis=1))
            self._edge_keys = None
        self.edges = sorted_edges[efirst]
        self.tet_edges = einverse.reshape(-1, 6)
        self.edge_rep_tet = (efirst // 6).astype(np.int64)
        elocal = LOCAL_EDGES[efirst % 6]
        self.edge_rep_slots = np.take_along_axis(elocal, eorder[efirst], axis=1)

        counts = np.bincount(self.tet_faces.ravel(), minlength=len(self.faces))
        if counts.max(initial=0) > 2:
            raise MeshValidationError("a face is shared by more than two tets")
        self.boundary_faces = np.nonzero(counts == 1)[0]
        signsum = np.zeros(len(self.faces), dtype=np.int64)
        np.add.at(signsum, self.tet_faces.ravel(), self.tet_face_signs.ravel())
        interior = counts == 2
        if np.any(signsum[interior] != 0):
            raise MeshValidationError(
                "interior face with non-opposite induced orientations"
            )

    def _build_measures(self):
        fc = self.coords_of_faces()
        n = 0.5 * np.cross(fc[:, 1] - fc[:, 0], fc[:, 2] - fc[:, 0])
        self.face_area_vectors = n
        self.face_areas = np.linalg.norm(n, axis=1)
        self.face_centroids = fc.mean(axis=1)
        ec = self.coords_of_edges()
        self.edge_vectors = ec[:, 1] - ec[:, 0]
        self.edge_lengths = np.linalg.norm(self.edge_vectors, axis=1)
        self.edge_midpoints = ec.mean(axis=1)
        self.tet_centroids = self.tet_coords.mean(axis=1)

    # -- basic queries ------------------------------------------------------

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_edges(self):
        return len(self.edges)

    @property
    def n_faces(self):
        return len(self.faces)

    @property
    def n_tets(self):
        return len(self.tets)

    def n_simplices(self, k):
        return (self.n_vertices, self.n_edges, self.n_faces, self.n_tets)[k]

    @property
    def euler_characteristic(self):
        return self.n_vertices - self.n_edges + self.n_faces - self.n_tets

    def coords_of_faces(self):
        """Positions of face vertices in canonical (ascending-id) order, (F,3,3)."""
        return self.tet_coords[self.face_rep_tet[:, None], self.face_rep_slots]

    def coords_of_edges(self):
        """Positions of edge vertices in canonical order, (E,2,3)."""
        return self.tet_coords[self.edge_rep_tet[:, None], self.edge_rep_slots]

    def face_ids_of(self, triples):
        """Face ids of vertex triples (any order); raises KeyError if absent.

        Only supported on non-periodic meshes, where a vertex triple
        determines at most one face.
        """
        if self._face_keys is None:
            raise KeyError("vertex triples are ambiguous on periodic meshes")
        triples = np.sort(np.asarray(triples, dtype=np.int64), axis=1)
        n_v = self.n_vertices
        keys = (triples[:, 0] * n_v + triples[:, 1]) * n_v + triples[:, 2]
        idx = np.searchsorted(self._face_keys, keys)
        idx = np.clip(idx, 0, len(self._face_keys) - 1)
        if np.any(self._face_keys[idx] != keys):
            raise KeyError("some vertex triples are not faces of this mesh")
        return idx

    def edge_id_at(self, va, vb, midpoint):
        """Edge id for a vertex pair, disambiguated by its (wrapped) midpoint."""
        lo, hi = (va, vb) if va < vb else (vb, va)
        if self._edge_keys is not None:
            key = lo * self.n_vertices + hi
            idx = int(np.searchsorted(self._edge_keys, key))
            if idx >= len(self._edge_keys) or self._edge_keys[idx] != key:
                raise KeyError(f"no edge with vertices ({va}, {vb})")
            return idx
        cand = np.nonzero((self.edges[:, 0] == lo) & (self.edges[:, 1] == hi))[0]
        if len(cand) == 0:
            raise KeyError(f"no edge with vertices ({va}, {vb})")
        q = _quantize_wrapped(np.asarray(midpoint, float)[None, :], self.periodic)
        qm = _quantize_wrapped(self.edge_midpoints[cand], self.periodic)
        match = np.nonzero((qm == q).all(axis=1))[0]
        if len(match) != 1:
            raise KeyError(f"edge ({va}, {vb}) at {midpoint} not uniquely found")
        return int(cand[match[0]])

    def boundary_components(self):
        """Connected components of the boundary faces, each an array of face ids."""
        bf = self.boundary_faces
        if len(bf) == 0:
            return []
        d1 = self.coboundary(1)
        sub = d1[bf]  # sparse (nb, E)
        adj = (sub @ sub.T).tocoo()
        graph = sp.csr_matrix(
            (np.ones_like(adj.data), (adj.row, adj.col)), shape=adj.shape
        )
        n_comp, labels = connected_components(graph, directed=False)
        comps = [bf[labels == c] for c in range(n_comp)]
        comps.sort(key=lambda ids: int(ids.min()))
        return comps

    def coboundary(self, k):
        """Signed integer incidence matrix taking k-cochains to (k+1)-cochains."""
        from .dec import coboundary

        if k not in self._incidence_cache:
            self._incidence_cache[k] = coboundary(self, k)
        return self._incidence_cache[k]


@dataclass
class Chain:
    """Integer-weighted formal sum of oriented k-simplices of a mesh."""

    mesh: TetMesh
    degree: int
    ids: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        self.ids = np.asarray(self.ids, dtype=np.int64)
        self.weights = np.asarray(self.weights, dtype=np.int64)
        if self.ids.shape != self.weights.shape:
            raise ValueError("ids and weights must have the same shape")
        if self.degree not in (0, 1, 2, 3):
            raise ValueError("chain degree must be in 0..3")
        if self.ids.size and (
            self.ids.min() < 0 or self.ids.max() >= self.mesh.n_simplices(self.degree)
        ):
            raise ValueError("simplex ids out of range for the host mesh")

    def as_vector(self):
        v = np.zeros(self.mesh.n_simplices(self.degree), dtype=np.int64)
        np.add.at(v, self.ids, self.weights)
        return v

    def boundary(self) -> "Chain":
        if self.degree == 0:
            return Chain(self.mesh, 0, np.array([], np.int64), np.array([], np.int64))
        d = self.mesh.coboundary(self.degree - 1)
        vec = d.T @ self.as_vector()
        ids = np.nonzero(vec)[0]
        return Chain(self.mesh, self.degree - 1, ids, vec[ids])


@dataclass
class SurfaceCycle:
    """Closed oriented surface as a 2-chain with per-face orientation signs."""

    mesh: TetMesh
    face_ids: np.ndarray
    signs: np.ndarray

    def __post_init__(self):
        self.face_ids = np.asarray(self.face_ids, dtype=np.int64)
        self.signs = np.asarray(self.signs, dtype=np.int64)
        bd = self.chain.boundary()
        if bd.ids.size:
            raise CycleError(
                f"surface chain has nonzero boundary on {bd.ids.size} edges"
            )

    @property
    def chain(self) -> Chain:
        return Chain(self.mesh, 2, self.face_ids, self.signs)

    def reversed(self) -> "SurfaceCycle":
        return SurfaceCycle(self.mesh, self.face_ids, -self.signs)


# ---------------------------------------------------------------------------
# generators
# ---------------------------------------------------------------------------

_KUHN_PERMS = list(itertools.permutations(range(3)))


def _kuhn_tets_of_cube(corner_ids, corner_coords):
    """Six path tets of a cube; yields (ids(4,), coords(4,3)) positively oriented."""
    out = []
    for perm in _KUHN_PERMS:
        steps = [(0, 0, 0)]
        cur = [0, 0, 0]
        for axis in perm:
            cur = cur.copy()
            cur[axis] += 1
            steps.append(tuple(cur))
        ids = np.array([corner_ids[s] for s in steps], dtype=np.int64)
        coords = np.array([corner_coords[s] for s in steps], dtype=float)
        vol = np.dot(
            coords[1] - coords[0],
            np.cross(coords[2] - coords[0], coords[3] - coords[0]),
        )
        if vol < 0:
            ids[[1, 2]] = ids[[2, 1]]
            coords[[1, 2]] = coords[[2, 1]]
        out.append((ids, coords))
    return out


def _anchor_min_corner(ids, coords):
    """Even-permute tet slots so slot 0 is the lexicographic minimum corner."""
    k = np.lexsort(coords.T[::-1])[0]
    if k == 0:
        return ids, coords
    # 3-cycles moving slot k to slot 0 (even permutations)
    cycle = {1: [1, 2, 0, 3], 2: [2, 0, 1, 3], 3: [3, 1, 0, 2]}[int(k)]
    perm = np.array(cycle)
    inv = np.argsort(perm)
    del inv
    return ids[perm], coords[perm]


def generate_flat_torus(n: int) -> TetMesh:
    """Periodic unit-cube mesh: n^3 cubes, each split into six path tets."""
    if n < 2:
        raise ParameterError(f"torus subdivision must be >= 2, got {n}")
    h = 1.0 / n

    def vid(i, j, k):
        return ((i % n) * n + (j % n)) * n + (k % n)

    grid = np.array(
        [[i, j, k] for i in range(n) for j in range(n) for k in range(n)], dtype=float
    )
    vertices = grid * h
    all_ids = []
    all_coords = []
    for i in range(n):
        for j in range(n):
            for k in range(n):
                corner_ids = {}
                corner_coords = {}
                for di in (0, 1):
                    for dj in (0, 1):
                        for dk in (0, 1):
                            corner_ids[(di, dj, dk)] = vid(i + di, j + dj, k + dk)
                            corner_coords[(di, dj, dk)] = np.array(
                                [i + di, j + dj, k + dk], dtype=float
                            ) * h
                for ids, coords in _kuhn_tets_of_cube(corner_ids, corner_coords):
                    ids, coords = _anchor_min_corner(ids, coords)
                    all_ids.append(ids)
                    all_coords.append(coords)
    mesh = TetMesh(
        vertices,
        np.array(all_ids),
        tet_coords=np.array(all_coords),
        periodic=(1.0, 1.0, 1.0),
        metadata={"kind": "torus", "n": n},
    )
    mesh.metadata["cycles_1"] = _torus_axis_cycles(mesh, n)
    mesh.metadata["cycles_2"] = _torus_plane_cycles(mesh, n)
    return mesh


def _torus_axis_cycles(mesh, n):
    """Edge loops along the three axes through the origin vertex."""

    def vid(i, j, k):
        return ((i % n) * n + (j % n)) * n + (k % n)

    cycles = []
    for axis in range(3):
        ids = []
        weights = []
        for step in range(n):
            a = np.zeros(3)
            b = np.zeros(3)
            a[axis] = step
            b[axis] = step + 1
            va = vid(*(int(x) for x in a))
            vb = vid(*(int(x) for x in b))
            mid = (a / n + b / n) / 2.0
            ids.append(mesh.edge_id_at(va, vb, mid))
            weights.append(1 if va < vb else -1)
        cycles.append(Chain(mesh, 1, np.array(ids), np.array(weights)))
    return cycles


def _torus_plane_cycles(mesh, n):
    """The three coordinate-plane 2-cycles through lattice level 0."""
    cycles = []
    lattice = np.rint(mesh.vertices * n).astype(np.int64)
    for axis in range(3):
        on_plane = lattice[:, axis] == 0
        mask = on_plane[mesh.faces].all(axis=1)
        fids = np.nonzero(mask)[0]
        normal = np.zeros(3)
        normal[axis] = 1.0
        signs = np.where(mesh.face_area_vectors[fids] @ normal > 0, 1, -1)
        cycles.append(SurfaceCycle(mesh, fids, signs))
    return cycles


def generate_box(n, bounds=((0.0, 1.0), (0.0, 1.0), (0.0, 1.0))) -> TetMesh:
    """Axis-aligned box mesh: n (or (nx,ny,nz)) cubes per axis, Kuhn-split."""
    if np.isscalar(n):
        n = (int(n),) * 3
    nx, ny, nz = (int(v) for v in n)
    if min(nx, ny, nz) < 1:
        raise ParameterError("box needs at least one cell per axis")
    lo = np.array([b[0] for b in bounds])
    hi = np.array([b[1] for b in bounds])
    if np.any(hi <= lo):
        raise ParameterError("box bounds must be increasing")

    def vid(i, j, k):
        return (i * (ny + 1) + j) * (nz + 1) + k

    coords = np.array(
        [
            lo + (hi - lo) * np.array([i / nx, j / ny, k / nz])
            for i in range(nx + 1)
            for j in range(ny + 1)
            for k in range(nz + 1)
        ]
    )
    all_ids = []
    for i in range(nx):
        for j in range(ny):
            for k in range(nz):
                corner_ids = {}
                corner_coords = {}
                for di in (0, 1):
                    for dj in (0, 1):
                        for dk in (0, 1):
                            corner_ids[(di, dj, dk)] = vid(i + di, j + dj, k + dk)
                            corner_coords[(di, dj, dk)] = coords[
                                vid(i + di, j + dj, k + dk)
                            ]
                for ids, _ in _kuhn_tets_of_cube(corner_ids, corner_coords):
                    all_ids.append(ids)
    return TetMesh(coords, np.array(all_ids), metadata={"kind": "box"})


def _octahedron_sphere(subdiv: int):
    """Octahedron subdivided ``subdiv`` times, vertices projected to the unit sphere."""
    verts = [
        (1.0, 0.0, 0.0),
        (-1.0, 0.0, 0.0),
        (0.0, 1.0, 0.0),
        (0.0, -1.0, 0.0),
        (0.0, 0.0, 1.0),
        (0.0, 0.0, -1.0),
    ]
    faces = [
        (0, 2, 4), (2, 1, 4), (1, 3, 4), (3, 0, 4),
        (2, 0, 5), (1, 2, 5), (3, 1, 5), (0, 3, 5),
    ]
    verts = [np.array(v) for v in verts]
    for _ in range(subdiv):
        cache = {}

        def midpoint(a, b):
            key = (min(a, b), max(a, b))
            if key not in cache:
                m = verts[a] + verts[b]
                m /= np.linalg.norm(m)
                cache[key] = len(verts)
                verts.append(m)
            return cache[key]

        new_faces = []
        for a, b, c in faces:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            new_faces += [(a, ab, ca), (ab, b, bc), (ca, bc, c), (ab, bc, ca)]
        faces = new_faces
    return np.array(verts), np.array(faces, dtype=np.int64)


def generate_shell(
    r_inner: float, r_outer: float, refinement: int, angular_subdiv=None
) -> TetMesh:
    """Tetrahedralized shell between concentric spheres.

    The sphere triangulation is a subdivided octahedron projected to the
    sphere; it is extruded through ``4 * 2**refinement`` radial layers with
    geometric spacing, and each prism is split into three tets with
    diagonals chosen from global vertex order (consistent across prisms).
    """
    if not (0 < r_inner < r_outer):
        raise ParameterError(
            f"need 0 < r_inner < r_outer, got {r_inner!r}, {r_outer!r}"
        )
    if refinement < 0:
        raise ParameterError("refinement must be >= 0")
    # one angular halving per refinement, offset so angular and radial
    # resolutions stay balanced against the 4 * 2**refinement radial layers
    subdiv = int(refinement) + 3 if angular_subdiv is None else int(angular_subdiv)
    sverts, sfaces = _octahedron_sphere(subdiv)
    n_s = len(sverts)
    layers = 4 * 2**int(refinement)
    ratio = r_outer / r_inner
    radii = r_inner * ratio ** (np.arange(layers + 1) / layers)

    vertices = np.concatenate([sverts * r for r in radii])
    tets = []
    band = []
    sorted_sfaces = np.sort(sfaces, axis=1)
    for i in range(layers):
        lo = i * n_s
        hi = (i + 1) * n_s
        for a, b, c in sorted_sfaces:
            a0, b0, c0 = lo + a, lo + b, lo + c
            a1, b1, c1 = hi + a, hi + b, hi + c
            for tet in ((a0, b0, c0, c1), (a0, b0, c1, b1), (a0, b1, c1, a1)):
                tets.append(tet)
                band.append(i)
    tets = np.array(tets, dtype=np.int64)
    coords = vertices[tets]
    vol = np.einsum(
        "ti,ti->t",
        coords[:, 1] - coords[:, 0],
        np.cross(coords[:, 2] - coords[:, 0], coords[:, 3] - coords[:, 0]),
    )
    flip = np.nonzero(vol < 0)[0]
    tets[flip[:, None], [1, 2]] = tets[flip[:, None], [2, 1]]

    mesh = TetMesh(
        vertices,
        tets,
        metadata={
            "kind": "shell",
            "r_inner": float(r_inner),
            "r_outer": float(r_outer),
            "refinement": int(refinement),
            "angular_subdiv": subdiv,
            "layer_radii": radii,
            "sphere_vertex_count": n_s,
            "tet_band": np.array(band, dtype=np.int64),
        },
    )
    layer_faces = []
    for i in range(layers + 1):
        triples = i * n_s + sorted_sfaces
        layer_faces.append(mesh.face_ids_of(triples))
    mesh.metadata["layer_faces"] = layer_faces
    mesh.metadata["cycles_1"] = []
    mesh.metadata["cycles_2"] = [gaussian_sphere(mesh, float(np.sqrt(r_inner * r_outer)))]
    return mesh


def gaussian_sphere(mesh: TetMesh, radius: float) -> SurfaceCycle:
    """Closed layer sphere of a shell mesh nearest the requested radius.

    Oriented as the boundary of the enclosed (inner) region, the
    orientation used in flux integrals.
    """
    meta = mesh.metadata
    if meta.get("kind") != "shell" or "layer_radii" not in meta:
        raise ParameterError("gaussian_sphere needs a generated shell mesh")
    radii = meta["layer_radii"]
    if not (radii[0] < radius < radii[-1]):
        raise ParameterError(
            f"radius {radius} outside the open shell range ({radii[0]}, {radii[-1]})"
        )
    layer = int(np.argmin(np.abs(radii - radius)))
    layer = min(max(layer, 1), len(radii) - 2)
    inner = np.nonzero(meta["tet_band"] < layer)[0]
    vec = np.zeros(mesh.n_tets, dtype=np.int64)
    vec[inner] = 1
    bd = mesh.coboundary(2).T @ vec  # boundary 2-chain of the inner region
    fids = meta["layer_faces"][layer]
    signs = bd[fids]
    if np.any(signs == 0):
        raise MeshValidationError("layer surface missing from region boundary")
    return SurfaceCycle(mesh, fids, signs)


def single_tet(kind="right") -> TetMesh:
    """One-tet fixtures: 'right' (unit corner tet) or 'regular' (well-centered)."""
    if kind == "right":
        verts = np.array(
            [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]
        )
    elif kind == "regular":
        verts = np.array(
            [
                [1.0, 1.0, 1.0],
                [1.0, -1.0, -1.0],
                [-1.0, 1.0, -1.0],
                [-1.0, -1.0, 1.0],
            ]
        )
    else:
        raise ParameterError(f"unknown single-tet kind {kind!r}")
    tets = np.array([[0, 1, 2, 3]])
    coords = verts[tets]
    vol = np.dot(
        coords[0, 1] - coords[0, 0],
        np.cross(coords[0, 2] - coords[0, 0], coords[0, 3] - coords[0, 0]),
    )
    if vol < 0:
        tets = np.array([[0, 2, 1, 3]])
    return TetMesh(verts, tets, metadata={"kind": "single_tet"})


# ---------------------------------------------------------------------------
# text I/O
# ---------------------------------------------------------------------------


def save_mesh(mesh: TetMesh, path):
    """Write node/ele text; vertices at 17 significant digits (exact round-trip)."""
    lines = ["# tetrahedral mesh"]
    if mesh.periodic is not None:
        p = mesh.periodic
        lines.append(f"# periodic {p[0]:.17g} {p[1]:.17g} {p[2]:.17g}")
    lines.append(f"{mesh.n_vertices}")
    for i, v in enumerate(mesh.vertices):
        lines.append(f"{i} {v[0]:.17g} {v[1]:.17g} {v[2]:.17g}")
    lines.append(f"{mesh.n_tets}")
    for i, t in enumerate(mesh.tets):
        lines.append(f"{i} {t[0]} {t[1]} {t[2]} {t[3]}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def _unwrap_periodic(vertices, tets, period):
    """Per-tet coordinates by minimum image from slot 0, ties toward +period/2."""
    coords = vertices[tets].copy()
    period = np.asarray(period, dtype=float)
    d = coords - coords[:, :1]
    shift = np.ceil(d / period - 0.5)
    coords = coords - shift * period
    vol = np.einsum(
        "ti,ti->t",
        coords[:, 1] - coords[:, 0],
        np.cross(coords[:, 2] - coords[:, 0], coords[:, 3] - coords[:, 0]),
    )
    bad = np.nonzero(vol <= 0)[0]
    for t in bad:
        if not _fix_tet_unwrap(coords[t], vertices[tets[t]], period):
            raise MeshValidationError(
                f"cannot unwrap periodic tet {t} to positive volume"
            )
    return coords


def _fix_tet_unwrap(coords, wrapped, period):
    """Search tie flips (displacement exactly half a period) for positive volume."""
    d = wrapped - wrapped[0]
    ties = []
    for slot in range(1, 4):
        for axis in range(3):
            frac = d[slot, axis] / period[axis]
            if abs(abs(frac - np.round(frac)) - 0.5) < 1e-12:
                ties.append((slot, axis))
    base = coords.copy()
    for bits in range(1, 2 ** len(ties)):
        cand = base.copy()
        for b, (slot, axis) in enumerate(ties):
            if bits >> b & 1:
                cand[slot, axis] -= period[axis]
        vol = np.dot(
            cand[1] - cand[0], np.cross(cand[2] - cand[0], cand[3] - cand[0])
        )
        if vol > 0:
            coords[:] = cand
            return True
    return False


def load_mesh(path) -> TetMesh:
    """Read node/ele text written by :func:`save_mesh` (or compatible)."""
    tokens = []  # (line_number, token)
    periodic = None
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            comment = raw.split("#", 1)[1].strip() if "#" in raw else ""
            if comment.startswith("periodic"):
                parts = comment.split()
                if len(parts) != 4:
                    raise ParseError("periodic comment needs three lengths", lineno)
                periodic = tuple(float(x) for x in parts[1:])
            if line:
                for tok in line.split():
                    tokens.append((lineno, tok))
    pos = 0

    def take(kind, what):
        nonlocal pos
        if pos >= len(tokens):
            last = tokens[-1][0] if tokens else 1
            raise ParseError(f"unexpected end of file, expected {what}", last)
        lineno, tok = tokens[pos]
        pos += 1
        try:
            return kind(tok)
        except ValueError:
            raise ParseError(f"expected {what}, got {tok!r}", lineno) from None

    n_v = take(int, "vertex count")
    verts = np.empty((n_v, 3))
    seen = np.zeros(n_v, dtype=bool)
    for _ in range(n_v):
        i = take(int, "vertex id")
        if not 0 <= i < n_v:
            raise ParseError(f"vertex id {i} out of range", tokens[pos - 1][0])
        verts[i] = [take(float, "coordinate") for _ in range(3)]
        seen[i] = True
    if not seen.all():
        raise ParseError("missing vertex records", tokens[pos - 1][0] if tokens else 1)
    n_t = take(int, "tet count")
    tets = np.empty((n_t, 4), dtype=np.int64)
    for _ in range(n_t):
        i = take(int, "tet id")
        if not 0 <= i < n_t:
            raise ParseError(f"tet id {i} out of range", tokens[pos - 1][0])
        tets[i] = [take(int, "vertex id") for _ in range(4)]
    if pos != len(tokens):
        raise ParseError("trailing tokens after tet section", tokens[pos][0])
    tet_coords = None
    if periodic is not None:
        tet_coords = _unwrap_periodic(verts, tets, periodic)
    return TetMesh(verts, tets, tet_coords=tet_coords, periodic=periodic)
