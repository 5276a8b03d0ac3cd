"""Sparse symmetric positive semidefinite solves and near-kernel eigenpairs.

``solve_spsd`` is preconditioned conjugate gradients with diagonal
preconditioning and explicit deflation of a supplied kernel basis each
iteration; ``smallest_eigenpairs`` is block inverse iteration on a slightly
shifted pencil with Rayleigh-Ritz extraction and deflation through
orthogonalization. Both are deterministic for fixed inputs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import CompatibilityError

__all__ = ["SolveReport", "solve_spsd", "smallest_eigenpairs", "EigenResult"]


@dataclass
class SolveReport:
    iterations: int
    relative_residual: float
    converged: bool


def _project_out(x, kernel):
    for k in kernel:
        x -= (np.dot(k, x) / np.dot(k, k)) * k


def solve_spsd(
    A,
    b,
    tol: float = 1e-10,
    *,
    kernel=None,
    constraint=None,
    mass=None,
    ground_index: int = 0,
    max_iter=None,
    compat_tol=None,
):
    """Conjugate-gradient solve of a symmetric positive semidefinite system.

    Parameters
    ----------
    A : sparse symmetric PSD matrix.
    b : right-hand side; must be orthogonal to the kernel within
        ``compat_tol`` (defaults to ``tol``) when a kernel basis is given.
    kernel : optional list of kernel vectors, projected out of the
        iterates every iteration (deflation).
    constraint : None, "ground" (x[ground_index] == 0) or "mean_zero"
        (mass-weighted mean of x == 0, requires ``mass``).
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    b = np.asarray(b, dtype=float)
    n = len(b)
    kernel = [np.asarray(k, dtype=float) for k in (kernel or [])]
    if max_iter is None:
        max_iter = max(200, int(50 * np.sqrt(n)))

    norm_b_orig = float(np.linalg.norm(b))
    if kernel:
        if compat_tol is None:
            compat_tol = tol
        for k in kernel:
            comp = abs(np.dot(k, b)) / (np.linalg.norm(k) * norm_b_orig or 1.0)
            if norm_b_orig > 0 and comp > compat_tol:
                raise CompatibilityError(
                    f"right-hand side has kernel component of relative size {comp:.3e}"
                )
        b = b.copy()
        _project_out(b, kernel)

    norm_b = float(np.linalg.norm(b))
    x = np.zeros(n)
    if norm_b == 0.0:
        _apply_constraint(x, constraint, mass, ground_index)
        return x, SolveReport(0, 0.0, True)

    diag = A.diagonal().astype(float)
    diag[diag <= 0] = 1.0
    inv_diag = 1.0 / diag

    r = b.copy()
    z = inv_diag * r
    p = z.copy()
    rz = float(np.dot(r, z))
    converged = False
    it = 0
    for it in range(1, int(max_iter) + 1):
        Ap = A @ p
        alpha = rz / float(np.dot(p, Ap))
        x += alpha * p
        r -= alpha * Ap
        if kernel:
            _project_out(r, kernel)
            _project_out(x, kernel)
        res = float(np.linalg.norm(r))
        if res <= tol * norm_b:
            converged = True
            break
        z = inv_diag * r
        rz_new = float(np.dot(r, z))
        p = z + (rz_new / rz) * p
        rz = rz_new
    final_res = float(np.linalg.norm(A @ x - b)) / norm_b
    _apply_constraint(x, constraint, mass, ground_index)
    return x, SolveReport(it, final_res, converged and final_res <= 10 * tol)


def _apply_constraint(x, constraint, mass, ground_index):
    if constraint is None:
        return
    if constraint == "ground":
        x -= x[ground_index]
    elif constraint == "mean_zero":
        if mass is None:
            raise ValueError("mean_zero constraint requires mass weights")
        x -= np.dot(mass, x) / np.sum(mass)
    else:
        raise ValueError(f"unknown constraint {constraint!r}")


@dataclass
class EigenResult:
    """Ascending near-smallest eigenvalues of a symmetric pencil (A, M)."""

    eigenvalues: np.ndarray
    vectors: np.ndarray  # columns, M-orthonormal
    residuals: np.ndarray  # ||A v - lambda M v|| / ||M v||
    converged: np.ndarray  # per-pair flags
    iterations: int


def _m_orthonormalize(X, m):
    """Orthonormalize columns of X in the diagonal-M inner product."""
    G = X.T @ (m[:, None] * X)
    # Cholesky-based; fall back to eigh for near-rank-deficient blocks
    try:
        L = np.linalg.cholesky(G)
        return np.linalg.solve(L, X.T).T
    except np.linalg.LinAlgError:
        w, V = np.linalg.eigh(G)
        keep = w > 1e-14 * w.max()
        return (X @ V[:, keep]) / np.sqrt(w[keep])


def smallest_eigenpairs(A, mass, count: int, tol: float = 1e-8, *, seed=0, max_outer=100):
    """Smallest eigenpairs of the generalized symmetric problem A v = lambda M v.

    M is diagonal (given as a weight vector). Block inverse iteration with a
    small fixed shift, Rayleigh-Ritz extraction each sweep, and residual
    convergence tests; a couple of guard vectors stabilize clustered ends
    of the spectrum. Deterministic for a fixed seed.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    m = np.asarray(mass, dtype=float)
    n = A.shape[0]
    count = min(count, n)
    block = min(n, count + 2)

    lam_scale = float(np.max(A.diagonal() / m))
    shift = 1e-8 * lam_scale

    if n <= 200:
        import scipy.linalg as sla

        w, V = sla.eigh(A.toarray(), np.diag(m))
        w = w[:count]
        V = V[:, :count]
        res = _eig_residuals(A, m, w, V)
        return EigenResult(w, V, res, res <= tol * lam_scale, 0)

    K = spla.splu(sp.csc_matrix(A + shift * sp.diags(m)))
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, block))
    X = _m_orthonormalize(X, m)
    w = np.zeros(block)
    it = 0
    for it in range(1, max_outer + 1):
        Y = K.solve(m[:, None] * X)
        Y = _m_orthonormalize(Y, m)
        H = Y.T @ (A @ Y)
        H = 0.5 * (H + H.T)
        w, Q = np.linalg.eigh(H)
        X = Y @ Q
        res = _eig_residuals(A, m, w[:count], X[:, :count])
        if np.all(res <= tol * max(lam_scale, 1e-300)):
            break
    res = _eig_residuals(A, m, w[:count], X[:, :count])
    return EigenResult(
        w[:count], X[:, :count], res, res <= tol * lam_scale, it
    )


def _eig_residuals(A, m, w, V):
    R = A @ V - (m[:, None] * V) * w[None, :]
    num = np.linalg.norm(R, axis=0)
    den = np.linalg.norm(m[:, None] * V, axis=0)
    return num / den
