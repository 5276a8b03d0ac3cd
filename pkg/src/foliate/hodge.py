"""Betti numbers, harmonic representatives, and the Hodge decomposition.

Betti numbers come from real ranks of the integer incidence matrices
(singular values above a relative threshold); harmonic bases come from the
near-kernel of the Hodge Laplacian pencil; the three-way decomposition
solves one least-squares potential problem per side, which makes the exact
and coexact parts star-orthogonal by construction.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .dec import Cochain, Stars, cochain_norm, laplacian
from .errors import ConvergenceError, DecompositionError, DegreeError, ParameterError
from .mesh import TetMesh
from .solve import smallest_eigenpairs, solve_spsd

__all__ = [
    "IllConditionedRankWarning",
    "betti",
    "betti_numbers",
    "HarmonicBasis",
    "harmonic_basis",
    "HodgeParts",
    "hodge_decompose",
    "ExactnessResult",
    "is_exact_1cochain",
    "save_harmonic_basis",
    "load_harmonic_basis",
]

# dense SVD rank is quadratic in memory; refuse beyond this element count
_RANK_SIZE_CAP = 60_000_000

RANK_TOL = 1e-9


class IllConditionedRankWarning(UserWarning):
    """Singular values fell within a decade of the rank threshold."""


def _rank(matrix, rank_tol):
    if matrix.shape[0] == 0 or matrix.shape[1] == 0:
        return 0
    if matrix.shape[0] * matrix.shape[1] > _RANK_SIZE_CAP:
        raise ParameterError(
            f"incidence matrix {matrix.shape} too large for dense rank; "
            "compute harmonic-space dimensions instead"
        )
    sv = np.linalg.svd(np.asarray(matrix.todense(), dtype=float), compute_uv=False)
    if sv.size == 0 or sv[0] == 0.0:
        return 0
    thresh = rank_tol * sv[0]
    near = np.sum((sv > thresh / 10) & (sv < thresh * 10))
    if near:
        warnings.warn(
            f"{near} singular values within 10x of the rank threshold",
            IllConditionedRankWarning,
            stacklevel=3,
        )
    return int(np.sum(sv > thresh))


def betti_numbers(mesh: TetMesh, rank_tol: float = RANK_TOL):
    """All four Betti numbers over the reals, from incidence ranks."""
    r = [_rank(mesh.coboundary(k), rank_tol) for k in range(3)]
    b = (
        mesh.n_vertices - r[0],
        mesh.n_edges - r[1] - r[0],
        mesh.n_faces - r[2] - r[1],
        mesh.n_tets - r[2],
    )
    if min(b) < 0:
        raise ArithmeticError(f"negative Betti number {b}; rank threshold unsound")
    assert b[0] - b[1] + b[2] - b[3] == mesh.euler_characteristic
    return b


def betti(mesh: TetMesh, k: int, rank_tol: float = RANK_TOL) -> int:
    """k-th Betti number of the complex (real coefficients)."""
    if k not in (0, 1, 2, 3):
        raise DegreeError(f"Betti degree must be in 0..3, got {k}")
    return betti_numbers(mesh, rank_tol)[k]


@dataclass
class HarmonicBasis:
    """Star-orthonormal basis of the near-kernel of a Hodge Laplacian."""

    degree: int
    basis: list  # of Cochain
    eigenvalues: np.ndarray
    d_residuals: np.ndarray
    delta_residuals: np.ndarray
    gap_ratio: float = np.inf

    def __len__(self):
        return len(self.basis)


def _expected_betti(mesh, k):
    known = mesh.metadata.get("betti")
    if known is not None:
        return int(known[k])
    return betti(mesh, k)


def harmonic_basis(
    mesh: TetMesh, stars: Stars, k: int, tol: float = 1e-8, count=None
) -> HarmonicBasis:
    """Harmonic k-cochains: closed and coclosed to tolerance, star-orthonormal.

    ``count`` defaults to the k-th Betti number; one extra eigenpair is
    always computed so the spectral gap below the first non-harmonic mode
    can be reported.
    """
    if count is None:
        count = _expected_betti(mesh, k)
    lap = laplacian(mesh, stars, k)
    eig = smallest_eigenpairs(lap.weak, lap.mass, count + 1, tol=tol)
    if count and not eig.converged[:count].all():
        raise ConvergenceError(
            f"harmonic eigenpairs did not converge (residuals {eig.residuals})"
        )
    basis = [Cochain(mesh, k, eig.vectors[:, i].copy()) for i in range(count)]
    d_res = np.zeros(count)
    delta_res = np.zeros(count)
    from .dec import codifferential

    delta = codifferential(mesh, stars, k) if k >= 1 else None
    for i, h in enumerate(basis):
        norm = cochain_norm(h, stars)
        if k <= 2:
            dh = h.d()
            d_res[i] = cochain_norm(dh, stars) / norm
        if delta is not None:
            dl = Cochain(mesh, k - 1, delta @ h.values)
            delta_res[i] = cochain_norm(dl, stars) / norm
    lam = eig.eigenvalues
    if count:
        floor = max(abs(lam[count - 1]), 1e-300)
        gap = abs(lam[count]) / floor if count < len(lam) else np.inf
    else:
        gap = np.inf
    return HarmonicBasis(k, basis, lam, d_res, delta_res, gap)


@dataclass
class HodgeParts:
    """Star-orthogonal three-way split of a cochain."""

    exact: Cochain
    coexact: Cochain
    harmonic: Cochain
    down_potential: Cochain = None  # exact == d(down_potential)
    up_potential: Cochain = None  # coexact == delta(up_potential)
    reports: dict = field(default_factory=dict)


def hodge_decompose(c: Cochain, stars: Stars, tol: float = 1e-10) -> HodgeParts:
    """Split a cochain into exact + coexact + harmonic parts.

    The exact part is d of the least-squares potential, the coexact part is
    delta of one, so their star-orthogonality is exact; the harmonic
    remainder is closed and coclosed to solver tolerance.
    """
    mesh, k = c.mesh, c.degree
    reports = {}
    down_potential = None
    up_potential = None
    # coboundaries of float inputs carry ~1e-16 summation noise outside the
    # operator range; treat right-hand sides below this floor as zero
    floor = 1e-13 * (1.0 + float(np.linalg.norm(c.values)))

    if k >= 1:
        d = mesh.coboundary(k - 1).astype(float)
        Sk = stars.weights[k]
        A = (d.T @ sp.diags(Sk) @ d).tocsr()
        rhs = d.T @ (Sk * c.values)
        scaled_floor = floor * float(np.max(Sk))
        if np.linalg.norm(rhs) <= scaled_floor:
            rhs = np.zeros_like(rhs)
        alpha, rep = solve_spsd(A, rhs, tol)
        reports["exact"] = rep
        if not rep.converged:
            raise DecompositionError("exact-part solve failed", rep)
        down_potential = Cochain(mesh, k - 1, alpha)
        exact = Cochain(mesh, k, d @ alpha)
    else:
        exact = Cochain.zero(mesh, k)

    if k <= 2:
        d = mesh.coboundary(k).astype(float)
        inv_Sk = 1.0 / stars.weights[k]
        K = (d @ sp.diags(inv_Sk) @ d.T).tocsr()
        rhs = d @ c.values
        if np.linalg.norm(rhs) <= floor:
            rhs = np.zeros_like(rhs)
        u, rep = solve_spsd(K, rhs, tol)
        reports["coexact"] = rep
        if not rep.converged:
            raise DecompositionError("coexact-part solve failed", rep)
        coexact = Cochain(mesh, k, inv_Sk * (d.T @ u))
        up_potential = Cochain(mesh, k + 1, u / stars.weights[k + 1])
    else:
        coexact = Cochain.zero(mesh, k)

    harmonic = c - exact - coexact
    return HodgeParts(exact, coexact, harmonic, down_potential, up_potential, reports)


@dataclass
class ExactnessResult:
    """Outcome of the exactness test for a 1-cochain."""

    exact: bool
    potential: Cochain | None
    periods: np.ndarray
    residual: float

    def __bool__(self):
        return self.exact


def cycle_periods(c: Cochain, cycles) -> np.ndarray:
    """Integrals of a 1-cochain over integer 1-cycles (chain pairing)."""
    out = []
    for cy in cycles:
        out.append(float(np.dot(c.values[cy.ids], cy.weights)))
    return np.array(out)


def is_exact_1cochain(
    c: Cochain, stars: Stars = None, tol: float = 1e-8, cycles=None
) -> ExactnessResult:
    """Decide exactness of a 1-cochain and return its potential when exact.

    Exactness is decided by periods over the mesh's homology 1-cycle basis
    (attached by the fixture generators); a mesh with trivial first
    homology has no cycles to test, so every closed 1-cochain is exact
    there. The potential is the star-weighted least-squares fit, grounded
    at vertex 0; for cochains that are exactly a coboundary the fit
    residual is at solver tolerance, for de Rham images of smooth exact
    forms it is quadrature-limited.
    """
    if c.degree != 1:
        raise DegreeError("exactness test expects a 1-cochain")
    mesh = c.mesh
    if cycles is None:
        cycles = mesh.metadata.get("cycles_1", [])
    periods = cycle_periods(c, cycles)
    scale = float(np.max(np.abs(c.values), initial=0.0))
    exact = bool(np.all(np.abs(periods) <= tol * max(1.0, scale)))
    if not exact:
        return ExactnessResult(False, None, periods, np.inf)
    weights = stars.weights[1] if stars is not None else np.ones(mesh.n_edges)
    d = mesh.coboundary(0).astype(float)
    A = (d.T @ sp.diags(weights) @ d).tocsr()
    rhs = d.T @ (weights * c.values)
    phi, rep = solve_spsd(A, rhs, max(1e-12, tol * 1e-4), constraint="ground")
    fit = d @ phi - c.values
    denom = float(np.sqrt(np.dot(weights * c.values, c.values))) or 1.0
    residual = float(np.sqrt(np.dot(weights * fit, fit))) / denom
    del rep
    return ExactnessResult(True, Cochain(mesh, 0, phi), periods, residual)


def save_harmonic_basis(basis: HarmonicBasis, path):
    """Text export: header 'degree count', then one value per line per vector."""
    with open(path, "w") as fh:
        fh.write(f"{basis.degree} {len(basis.basis)}\n")
        for h in basis.basis:
            for v in h.values:
                fh.write(f"{v:.17g}\n")


def load_harmonic_basis(mesh: TetMesh, path):
    """Inverse of :func:`save_harmonic_basis`; returns (degree, list of Cochain)."""
    with open(path) as fh:
        tokens = fh.read().split()
    degree, count = int(tokens[0]), int(tokens[1])
    n = mesh.n_simplices(degree)
    vals = np.array([float(t) for t in tokens[2:]], dtype=float)
    if vals.size != count * n:
        raise ParameterError("harmonic basis file does not match mesh size")
    return degree, [Cochain(mesh, degree, vals[i * n : (i + 1) * n]) for i in range(count)]
