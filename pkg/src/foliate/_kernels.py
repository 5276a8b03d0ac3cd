"""Hot per-tet kernels: dual-measure assembly, marching tetrahedra, 2-form fits.

Each kernel has two implementations: a numba ``@njit`` loop (default) and a
vectorized pure-numpy fallback. Selection happens at import time; set
``FOLIATE_NUMBA=0`` in the environment (or run without numba installed) to
force the numpy path. ``benchmarks/bench_kernels.py`` times both.

Local simplex tables (vertex order of a tet is (0, 1, 2, 3)):

* face ``j`` is opposite local vertex ``j``
* edges are ordered ``(0,1), (0,2), (0,3), (1,2), (1,3), (2,3)``
"""

from __future__ import annotations

import os

import numpy as np

__all__ = [
    "backend",
    "dual_measures_barycentric",
    "dual_measures_circumcentric",
    "marching_tets",
    "fit_constant_two_forms",
    "LOCAL_FACES",
    "LOCAL_EDGES",
    "EDGES_OF_FACE",
]

LOCAL_FACES = np.array([[1, 2, 3], [0, 2, 3], [0, 1, 3], [0, 1, 2]], dtype=np.int64)
LOCAL_EDGES = np.array(
    [[0, 1], [0, 2], [0, 3], [1, 2], [1, 3], [2, 3]], dtype=np.int64
)
# local edge indices contained in each local face
EDGES_OF_FACE = np.array([[3, 4, 5], [1, 2, 5], [0, 2, 4], [0, 1, 3]], dtype=np.int64)

# local edge index for a pair of local vertex slots
EDGE_INDEX_OF_SLOTS = np.full((4, 4), -1, dtype=np.int64)
for _idx, (_i, _j) in enumerate(LOCAL_EDGES):
    EDGE_INDEX_OF_SLOTS[_i, _j] = EDGE_INDEX_OF_SLOTS[_j, _i] = _idx

_env = os.environ.get("FOLIATE_NUMBA", "1").strip().lower()
_want_numba = _env not in ("0", "false", "off", "no")

if _want_numba:
    try:
        from numba import njit

        _HAVE_NUMBA = True
    except ImportError:  # pragma: no cover - depends on environment
        _HAVE_NUMBA = False
else:
    _HAVE_NUMBA = False


def backend() -> str:
    """Name of the active kernel backend: 'numba' or 'numpy'."""
    return "numba" if _HAVE_NUMBA else "numpy"


# ---------------------------------------------------------------------------
# numpy implementations
# ---------------------------------------------------------------------------


def _tet_circumcenters_np(tc):
    """Circumcenters of tets given coords (T,4,3)."""
    a = tc[:, 1] - tc[:, 0]
    b = tc[:, 2] - tc[:, 0]
    c = tc[:, 3] - tc[:, 0]
    A = np.stack([a, b, c], axis=1) * 2.0
    rhs = np.stack(
        [np.sum(a * a, axis=1), np.sum(b * b, axis=1), np.sum(c * c, axis=1)], axis=1
    )
    return tc[:, 0] + np.linalg.solve(A, rhs[:, :, None])[:, :, 0]


def _tri_circumcenters_np(p0, p1, p2):
    """Circumcenters of triangles in 3D, vectorized over leading axes."""
    a = p1 - p0
    b = p2 - p0
    axb = np.cross(a, b)
    denom = 2.0 * np.sum(axb * axb, axis=-1, keepdims=True)
    num = np.sum(a * a, axis=-1, keepdims=True) * np.cross(b, axb) - np.sum(
        b * b, axis=-1, keepdims=True
    ) * np.cross(a, axb)
    return p0 + num / denom


def dual_measures_barycentric_np(tc, tets, tet_faces, tet_edges, n_v, n_e, n_f):
    vol = (
        np.einsum(
            "ti,ti->t",
            tc[:, 1] - tc[:, 0],
            np.cross(tc[:, 2] - tc[:, 0], tc[:, 3] - tc[:, 0]),
        )
        / 6.0
    )
    bt = tc.mean(axis=1)
    vertex_vol = np.zeros(n_v)
    np.add.at(vertex_vol, tets.ravel(), np.repeat(vol / 4.0, 4))

    face_centers = tc[:, LOCAL_FACES].mean(axis=2)  # (T,4,3)
    face_len = np.zeros(n_f)
    seg = np.linalg.norm(bt[:, None, :] - face_centers, axis=2)  # (T,4)
    np.add.at(face_len, tet_faces.ravel(), seg.ravel())

    mids = 0.5 * (tc[:, LOCAL_EDGES[:, 0]] + tc[:, LOCAL_EDGES[:, 1]])  # (T,6,3)
    edge_area = np.zeros(n_e)
    for k in range(6):
        m = mids[:, k]
        total = np.zeros(len(tc))
        for f in _faces_of_edge(k):
            cf = face_centers[:, f]
            total += 0.5 * np.linalg.norm(np.cross(cf - m, bt - m), axis=1)
        np.add.at(edge_area, tet_edges[:, k], total)
    return vertex_vol, edge_area, face_len


def _faces_of_edge(k):
    return [f for f in range(4) if k in EDGES_OF_FACE[f]]


def dual_measures_circumcentric_np(tc, tets, tet_faces, tet_edges, n_v, n_e, n_f):
    T = len(tc)
    vol = np.einsum(
        "ti,ti->t",
        tc[:, 1] - tc[:, 0],
        np.cross(tc[:, 2] - tc[:, 0], tc[:, 3] - tc[:, 0]),
    )
    ct = _tet_circumcenters_np(tc)

    vertex_vol = np.zeros(n_v)
    edge_area = np.zeros(n_e)
    face_len = np.zeros(n_f)

    for j in range(4):
        fv = LOCAL_FACES[j]
        p0, p1, p2 = tc[:, fv[0]], tc[:, fv[1]], tc[:, fv[2]]
        cf = _tri_circumcenters_np(p0, p1, p2)
        n = np.cross(p1 - p0, p2 - p0)
        opp = tc[:, j]
        side_ct = np.sum(n * (ct - p0), axis=1)
        side_opp = np.sum(n * (opp - p0), axis=1)
        s2 = np.sign(side_ct) * np.sign(side_opp)
        # dual edge piece for this face: signed distance circumcenter-to-circumcenter
        face_len_piece = s2 * np.linalg.norm(ct - cf, axis=1)
        np.add.at(face_len, tet_faces[:, j], face_len_piece)

        for k in EDGES_OF_FACE[j]:
            ea, eb = LOCAL_EDGES[k]
            pa, pb = tc[:, ea], tc[:, eb]
            third = fv[~np.isin(fv, [ea, eb])][0]
            pc_ = tc[:, third]
            m = 0.5 * (pa + pb)
            w = np.cross(pb - pa, n)  # in-plane normal to the edge
            s1 = np.sign(np.sum(w * (cf - m), axis=1)) * np.sign(
                np.sum(w * (pc_ - m), axis=1)
            )
            tri_area = 0.5 * np.linalg.norm(np.cross(cf - m, ct - m), axis=1)
            np.add.at(edge_area, tet_edges[:, k], s1 * s2 * tri_area)
            for v_local in (ea, eb):
                pv = tc[:, v_local]
                piece = (
                    np.abs(
                        np.einsum("ti,ti->t", m - pv, np.cross(cf - pv, ct - pv))
                    )
                    / 6.0
                )
                np.add.at(vertex_vol, tets[:, v_local], s1 * s2 * piece)
    del T, vol
    return vertex_vol, edge_area, face_len


def fit_constant_two_forms_np(face_vectors, face_values):
    """Least-squares constant 2-form per tet from its 4 face integrals.

    ``face_vectors``: (T,4,3) canonical area vectors; ``face_values``: (T,4).
    Returns coefficient array (T,3) and rms fit residual (T,).
    """
    M = face_vectors
    v = face_values
    AtA = np.einsum("tfi,tfj->tij", M, M)
    Atb = np.einsum("tfi,tf->ti", M, v)
    w = np.linalg.solve(AtA, Atb)
    resid = np.einsum("tfi,ti->tf", M, w) - v
    return w, np.sqrt(np.mean(resid**2, axis=1))


def marching_tets_np(tc, tets, phi, level):
    """Level-set triangles of the vertex field phi, per tet.

    Returns ``(keys, pos, host)`` where keys is (n,3,2) int64 global vertex
    pairs identifying the cut edge of each triangle corner (ascending ids),
    pos is (n,3,3) corner positions, host is (n,) tet indices.
    """
    d = phi[tets] - level  # (T,4)
    below = d < 0.0
    nb = below.sum(axis=1)

    keys_out = []
    pos_out = []
    host_out = []
    order_out = []

    def interp(t_idx, la, lb):
        va = tets[t_idx, la]
        vb = tets[t_idx, lb]
        swap = va > vb
        lo_l = np.where(swap, lb, la)
        hi_l = np.where(swap, la, lb)
        lo = tets[t_idx, lo_l]
        hi = tets[t_idx, hi_l]
        plo = tc[t_idx, lo_l]
        phi_lo = phi[lo]
        phi_hi = phi[hi]
        t = (level - phi_lo) / (phi_hi - phi_lo)
        pos = plo + t[:, None] * (tc[t_idx, hi_l] - plo)
        return np.stack([lo, hi], axis=1), pos

    def emit(t_idx, corner_edges, ordinal):
        ks = []
        ps = []
        for la, lb in corner_edges:
            la_arr = np.full(len(t_idx), la)
            lb_arr = np.full(len(t_idx), lb)
            k, p = interp(t_idx, la_arr, lb_arr)
            ks.append(k)
            ps.append(p)
        keys_out.append(np.stack(ks, axis=1))
        pos_out.append(np.stack(ps, axis=1))
        host_out.append(t_idx)
        order_out.append(t_idx * 2 + ordinal)

    # one isolated vertex (below or above): single triangle
    for flip in (False, True):
        mask_count = 1 if not flip else 3
        rows = np.nonzero(nb == mask_count)[0]
        if len(rows) == 0:
            continue
        iso = np.argmax(below[rows] != flip, axis=1)
        for v in range(4):
            t_idx = rows[iso == v]
            if len(t_idx) == 0:
                continue
            others = [o for o in range(4) if o != v]
            emit(t_idx, [(v, others[0]), (v, others[1]), (v, others[2])], 0)

    # two-two split: quad cut into two triangles
    rows = np.nonzero(nb == 2)[0]
    if len(rows) > 0:
        pattern = below[rows] @ np.array([8, 4, 2, 1])
        pair_of = {
            12: (0, 1, 2, 3),
            10: (0, 2, 1, 3),
            9: (0, 3, 1, 2),
            6: (1, 2, 0, 3),
            5: (1, 3, 0, 2),
            3: (2, 3, 0, 1),
        }
        for code, (a, b, x, y) in pair_of.items():
            t_idx = rows[pattern == code]
            if len(t_idx) == 0:
                continue
            emit(t_idx, [(a, x), (a, y), (b, y)], 0)
            emit(t_idx, [(a, x), (b, y), (b, x)], 1)

    if not keys_out:
        return (
            np.zeros((0, 3, 2), dtype=np.int64),
            np.zeros((0, 3, 3)),
            np.zeros(0, dtype=np.int64),
        )
    keys = np.concatenate(keys_out)
    pos = np.concatenate(pos_out)
    host = np.concatenate(host_out)
    order = np.argsort(np.concatenate(order_out), kind="stable")
    return keys[order], pos[order], host[order]


# ---------------------------------------------------------------------------
# numba implementations
# ---------------------------------------------------------------------------

if _HAVE_NUMBA:

    @njit(cache=True)
    def _cross(a, b, out):
        out[0] = a[1] * b[2] - a[2] * b[1]
        out[1] = a[2] * b[0] - a[0] * b[2]
        out[2] = a[0] * b[1] - a[1] * b[0]

    @njit(cache=True)
    def _dot(a, b):
        return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]

    @njit(cache=True)
    def _solve3(A, b):
        det = (
            A[0, 0] * (A[1, 1] * A[2, 2] - A[1, 2] * A[2, 1])
            - A[0, 1] * (A[1, 0] * A[2, 2] - A[1, 2] * A[2, 0])
            + A[0, 2] * (A[1, 0] * A[2, 1] - A[1, 1] * A[2, 0])
        )
        x = np.empty(3)
        x[0] = (
            b[0] * (A[1, 1] * A[2, 2] - A[1, 2] * A[2, 1])
            - A[0, 1] * (b[1] * A[2, 2] - A[1, 2] * b[2])
            + A[0, 2] * (b[1] * A[2, 1] - A[1, 1] * b[2])
        ) / det
        x[1] = (
            A[0, 0] * (b[1] * A[2, 2] - A[1, 2] * b[2])
            - b[0] * (A[1, 0] * A[2, 2] - A[1, 2] * A[2, 0])
            + A[0, 2] * (A[1, 0] * b[2] - b[1] * A[2, 0])
        ) / det
        x[2] = (
            A[0, 0] * (A[1, 1] * b[2] - b[1] * A[2, 1])
            - A[0, 1] * (A[1, 0] * b[2] - b[1] * A[2, 0])
            + b[0] * (A[1, 0] * A[2, 1] - A[1, 1] * A[2, 0])
        ) / det
        return x

    @njit(cache=True)
    def _tet_circumcenter(p0, p1, p2, p3):
        A = np.empty((3, 3))
        rhs = np.empty(3)
        for row, p in enumerate((p1, p2, p3)):
            s = 0.0
            for i in range(3):
                A[row, i] = 2.0 * (p[i] - p0[i])
                s += (p[i] - p0[i]) * (p[i] - p0[i])
            rhs[row] = s
        c = _solve3(A, rhs)
        return c + p0

    @njit(cache=True)
    def _tri_circumcenter(p0, p1, p2):
        a = p1 - p0
        b = p2 - p0
        axb = np.empty(3)
        _cross(a, b, axb)
        denom = 2.0 * _dot(axb, axb)
        bxaxb = np.empty(3)
        _cross(b, axb, bxaxb)
        axaxb = np.empty(3)
        _cross(a, axb, axaxb)
        return p0 + (_dot(a, a) * bxaxb - _dot(b, b) * axaxb) / denom

    @njit(cache=True)
    def _dual_measures_barycentric_nb(
        tc, tets, tet_faces, tet_edges, n_v, n_e, n_f, lf, le, eof
    ):
        T = tc.shape[0]
        vertex_vol = np.zeros(n_v)
        edge_area = np.zeros(n_e)
        face_len = np.zeros(n_f)
        tmp = np.empty(3)
        for t in range(T):
            p = tc[t]
            _cross(p[2] - p[0], p[3] - p[0], tmp)
            vol = _dot(p[1] - p[0], tmp) / 6.0
            bt = (p[0] + p[1] + p[2] + p[3]) / 4.0
            for v in range(4):
                vertex_vol[tets[t, v]] += vol / 4.0
            for j in range(4):
                cf = (p[lf[j, 0]] + p[lf[j, 1]] + p[lf[j, 2]]) / 3.0
                face_len[tet_faces[t, j]] += np.sqrt(_dot(bt - cf, bt - cf))
                for kk in range(3):
                    k = eof[j, kk]
                    m = 0.5 * (p[le[k, 0]] + p[le[k, 1]])
                    _cross(cf - m, bt - m, tmp)
                    edge_area[tet_edges[t, k]] += 0.5 * np.sqrt(_dot(tmp, tmp))
        return vertex_vol, edge_area, face_len

    @njit(cache=True)
    def _dual_measures_circumcentric_nb(
        tc, tets, tet_faces, tet_edges, n_v, n_e, n_f, lf, le, eof
    ):
        T = tc.shape[0]
        vertex_vol = np.zeros(n_v)
        edge_area = np.zeros(n_e)
        face_len = np.zeros(n_f)
        n = np.empty(3)
        w = np.empty(3)
        tmp = np.empty(3)
        for t in range(T):
            p = tc[t]
            ct = _tet_circumcenter(p[0], p[1], p[2], p[3])
            for j in range(4):
                a, b, c = lf[j, 0], lf[j, 1], lf[j, 2]
                cf = _tri_circumcenter(p[a], p[b], p[c])
                _cross(p[b] - p[a], p[c] - p[a], n)
                side_ct = _dot(n, ct - p[a])
                side_opp = _dot(n, p[j] - p[a])
                s2 = 0.0
                if side_ct * side_opp > 0.0:
                    s2 = 1.0
                elif side_ct * side_opp < 0.0:
                    s2 = -1.0
                face_len[tet_faces[t, j]] += s2 * np.sqrt(_dot(ct - cf, ct - cf))
                for kk in range(3):
                    k = eof[j, kk]
                    ea, eb = le[k, 0], le[k, 1]
                    third = a + b + c - ea - eb
                    m = 0.5 * (p[ea] + p[eb])
                    _cross(p[eb] - p[ea], n, w)
                    prod = _dot(w, cf - m) * _dot(w, p[third] - m)
                    s1 = 0.0
                    if prod > 0.0:
                        s1 = 1.0
                    elif prod < 0.0:
                        s1 = -1.0
                    _cross(cf - m, ct - m, tmp)
                    edge_area[tet_edges[t, k]] += (
                        s1 * s2 * 0.5 * np.sqrt(_dot(tmp, tmp))
                    )
                    for vv in range(2):
                        v_local = le[k, vv]
                        pv = p[v_local]
                        _cross(cf - pv, ct - pv, tmp)
                        piece = abs(_dot(m - pv, tmp)) / 6.0
                        vertex_vol[tets[t, v_local]] += s1 * s2 * piece
        return vertex_vol, edge_area, face_len

    @njit(cache=True)
    def _fit_constant_two_forms_nb(face_vectors, face_values):
        T = face_vectors.shape[0]
        out = np.empty((T, 3))
        resid = np.empty(T)
        AtA = np.empty((3, 3))
        Atb = np.empty(3)
        for t in range(T):
            M = face_vectors[t]
            v = face_values[t]
            for i in range(3):
                Atb[i] = 0.0
                for j in range(3):
                    AtA[i, j] = 0.0
            for f in range(4):
                for i in range(3):
                    Atb[i] += M[f, i] * v[f]
                    for j in range(3):
                        AtA[i, j] += M[f, i] * M[f, j]
            wv = _solve3(AtA, Atb)
            out[t] = wv
            rr = 0.0
            for f in range(4):
                r = M[f, 0] * wv[0] + M[f, 1] * wv[1] + M[f, 2] * wv[2] - v[f]
                rr += r * r
            resid[t] = np.sqrt(rr / 4.0)
        return out, resid

    @njit(cache=True)
    def _marching_tets_nb(tc, tets, phi, level, le):
        T = tets.shape[0]
        ntri = 0
        for t in range(T):
            nb = 0
            for v in range(4):
                if phi[tets[t, v]] - level < 0.0:
                    nb += 1
            if nb == 1 or nb == 3:
                ntri += 1
            elif nb == 2:
                ntri += 2
        keys = np.zeros((ntri, 3, 2), dtype=np.int64)
        pos = np.zeros((ntri, 3, 3))
        host = np.zeros(ntri, dtype=np.int64)
        idx = 0
        corner_a = np.empty(6, dtype=np.int64)
        corner_b = np.empty(6, dtype=np.int64)
        for t in range(T):
            nb = 0
            below = np.zeros(4, dtype=np.int64)
            for v in range(4):
                if phi[tets[t, v]] - level < 0.0:
                    below[v] = 1
                    nb += 1
            if nb == 0 or nb == 4:
                continue
            ncorners = 0
            ntris_here = 0
            if nb == 1 or nb == 3:
                want = 1 if nb == 1 else 0
                iso = -1
                for v in range(4):
                    if below[v] == want:
                        iso = v
                for o in range(4):
                    if o != iso:
                        corner_a[ncorners] = iso
                        corner_b[ncorners] = o
                        ncorners += 1
                ntris_here = 1
            else:
                lo = np.empty(2, dtype=np.int64)
                hi = np.empty(2, dtype=np.int64)
                il = 0
                ih = 0
                for v in range(4):
                    if below[v] == 1:
                        lo[il] = v
                        il += 1
                    else:
                        hi[ih] = v
                        ih += 1
                a, b = lo[0], lo[1]
                x, y = hi[0], hi[1]
                # quad (a,x), (a,y), (b,y), (b,x) -> two triangles
                corner_a[0] = a
                corner_b[0] = x
                corner_a[1] = a
                corner_b[1] = y
                corner_a[2] = b
                corner_b[2] = y
                corner_a[3] = a
                corner_b[3] = x
                corner_a[4] = b
                corner_b[4] = y
                corner_a[5] = b
                corner_b[5] = x
                ncorners = 6
                ntris_here = 2
            for tri in range(ntris_here):
                for c in range(3):
                    la = corner_a[tri * 3 + c]
                    lb = corner_b[tri * 3 + c]
                    va = tets[t, la]
                    vb = tets[t, lb]
                    if va > vb:
                        la, lb = lb, la
                        va, vb = vb, va
                    frac = (level - phi[va]) / (phi[vb] - phi[va])
                    keys[idx, c, 0] = va
                    keys[idx, c, 1] = vb
                    for i in range(3):
                        pa = tc[t, la, i]
                        pb = tc[t, lb, i]
                        pos[idx, c, i] = pa + frac * (pb - pa)
                host[idx] = t
                idx += 1
        return keys, pos, host


# ---------------------------------------------------------------------------
# dispatchers
# ---------------------------------------------------------------------------


def dual_measures_barycentric(tc, tets, tet_faces, tet_edges, n_v, n_e, n_f):
    """Barycentric dual measures: vertex volumes, edge dual areas, face dual lengths."""
    if _HAVE_NUMBA:
        return _dual_measures_barycentric_nb(
            tc, tets, tet_faces, tet_edges, n_v, n_e, n_f,
            LOCAL_FACES, LOCAL_EDGES, EDGES_OF_FACE,
        )
    return dual_measures_barycentric_np(tc, tets, tet_faces, tet_edges, n_v, n_e, n_f)


def dual_measures_circumcentric(tc, tets, tet_faces, tet_edges, n_v, n_e, n_f):
    """Signed circumcentric dual measures (may be non-positive off well-centered meshes)."""
    if _HAVE_NUMBA:
        return _dual_measures_circumcentric_nb(
            tc, tets, tet_faces, tet_edges, n_v, n_e, n_f,
            LOCAL_FACES, LOCAL_EDGES, EDGES_OF_FACE,
        )
    return dual_measures_circumcentric_np(
        tc, tets, tet_faces, tet_edges, n_v, n_e, n_f
    )


def fit_constant_two_forms(face_vectors, face_values):
    """Per-tet least-squares constant 2-form from 4 face integrals; see numpy impl."""
    if _HAVE_NUMBA:
        return _fit_constant_two_forms_nb(
            np.ascontiguousarray(face_vectors), np.ascontiguousarray(face_values)
        )
    return fit_constant_two_forms_np(face_vectors, face_values)


def marching_tets(tc, tets, phi, level):
    """Extract level-set triangles; see the numpy implementation for the contract."""
    if _HAVE_NUMBA:
        return _marching_tets_nb(tc, tets, phi, float(level), LOCAL_EDGES)
    return marching_tets_np(tc, tets, phi, float(level))
