"""Exact exterior algebra on a single metric 3-dimensional tangent space.

Coefficient conventions (fixed once, everything else follows from them):

* 0-forms: ``[c]`` meaning ``c * 1``
* 1-forms: ``[a1, a2, a3]`` meaning ``a1 dx + a2 dy + a3 dz``
* 2-forms: ``[b1, b2, b3]`` meaning ``b1 dy^dz + b2 dz^dx + b3 dx^dy``
* 3-forms: ``[c]`` meaning ``c dx^dy^dz``

The 2-form basis order makes the Euclidean Hodge star the identity map
between 1-form and 2-form coefficient arrays, so a sign error anywhere
shows up immediately in the star round-trip test.

Also houses the closed-form point-mass field (inverse-square law) used as
the analytic oracle by the mesh-level experiments, and central finite
differences for closedness checks of analytic fields.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from typing import Callable, Sequence

import numpy as np

from .errors import (
    DegenerateFormError,
    DegreeError,
    MetricError,
    SingularityError,
    TangencyError,
)

__all__ = [
    "COEFF_LENGTH",
    "TangentMetric",
    "KForm",
    "AnalyticField",
    "wedge",
    "hodge_star",
    "sharp",
    "flat",
    "interior_product",
    "form_inner",
    "two_form_identities",
    "IdentityReport",
    "pointwise_kernel_split",
    "leaf_complex_structure",
    "fd_exterior_derivative",
    "newton_oracle",
    "NewtonPointValues",
    "random_spd_metric",
    "property_suite",
    "constant_field",
    "newton_sigma_field",
    "newton_star_sigma_field",
    "newton_potential_field",
]

COEFF_LENGTH = {0: 1, 1: 3, 2: 3, 3: 1}

DEGENERACY_THRESHOLD = 1e-14


class TangentMetric:
    """Symmetric positive definite 3x3 metric on one tangent space.

    Symmetry must hold exactly as stored; positive definiteness is checked
    through the three leading principal minors.
    """

    __slots__ = ("g", "inverse", "sqrt_det")

    def __init__(self, g):
        g = np.asarray(g, dtype=float)
        if g.shape != (3, 3):
            raise MetricError(f"metric must be 3x3, got shape {g.shape}")
        if not np.array_equal(g, g.T):
            raise MetricError("metric must be exactly symmetric as stored")
        m1 = g[0, 0]
        m2 = g[0, 0] * g[1, 1] - g[0, 1] * g[1, 0]
        m3 = float(np.linalg.det(g))
        if not (m1 > 0 and m2 > 0 and m3 > 0):
            raise MetricError(
                f"metric not positive definite (leading minors {m1}, {m2}, {m3})"
            )
        self.g = g
        self.inverse = np.linalg.inv(g)
        self.sqrt_det = float(np.sqrt(m3))

    def __repr__(self):
        return f"TangentMetric({self.g.tolist()})"


EUCLIDEAN = TangentMetric(np.eye(3))


@dataclass(frozen=True)
class KForm:
    """Degree-k form on one 3-dimensional tangent space."""

    degree: int
    coeffs: np.ndarray

    def __post_init__(self):
        if self.degree not in COEFF_LENGTH:
            raise DegreeError(f"degree must be in 0..3, got {self.degree}")
        coeffs = np.atleast_1d(np.asarray(self.coeffs, dtype=float))
        if coeffs.shape != (COEFF_LENGTH[self.degree],):
            raise DegreeError(
                f"degree-{self.degree} form needs {COEFF_LENGTH[self.degree]} "
                f"coefficients, got shape {coeffs.shape}"
            )
        object.__setattr__(self, "coeffs", coeffs)

    @staticmethod
    def zero(degree):
        return KForm(degree, np.zeros(COEFF_LENGTH[degree]))

    def norm(self):
        return float(np.linalg.norm(self.coeffs))

    def __add__(self, other):
        if self.degree != other.degree:
            raise DegreeError("cannot add forms of different degree")
        return KForm(self.degree, self.coeffs + other.coeffs)

    def __sub__(self, other):
        if self.degree != other.degree:
            raise DegreeError("cannot subtract forms of different degree")
        return KForm(self.degree, self.coeffs - other.coeffs)

    def __mul__(self, scalar):
        return KForm(self.degree, self.coeffs * float(scalar))

    __rmul__ = __mul__


def wedge(a: KForm, b: KForm) -> KForm:
    """Exterior product. Bilinear, graded-anticommutative."""
    total = a.degree + b.degree
    if total > 3:
        raise DegreeError(
            f"wedge of degrees {a.degree} and {b.degree} exceeds dimension 3"
        )
    if a.degree == 0:
        return KForm(b.degree, a.coeffs[0] * b.coeffs)
    if b.degree == 0:
        return KForm(a.degree, b.coeffs[0] * a.coeffs)
    if a.degree == 1 and b.degree == 1:
        return KForm(2, np.cross(a.coeffs, b.coeffs))
    # remaining cases: 1^2 and 2^1, both commute (degree product even)
    return KForm(3, np.array([float(np.dot(a.coeffs, b.coeffs))]))


def hodge_star(g: TangentMetric, a: KForm) -> KForm:
    """Metric Hodge star; maps degree k to 3-k and squares to the identity."""
    s = g.sqrt_det
    if a.degree == 0:
        return KForm(3, a.coeffs * s)
    if a.degree == 1:
        return KForm(2, s * (g.inverse @ a.coeffs))
    if a.degree == 2:
        return KForm(1, (g.g @ a.coeffs) / s)
    return KForm(0, a.coeffs / s)


def sharp(g: TangentMetric, a: KForm) -> np.ndarray:
    """Vector metric-dual to a 1-form: g(sharp(a), u) == a(u) for all u."""
    if a.degree != 1:
        raise DegreeError(f"sharp needs a 1-form, got degree {a.degree}")
    return g.inverse @ a.coeffs


def flat(g: TangentMetric, v) -> KForm:
    """1-form metric-dual to a vector; inverse of :func:`sharp`."""
    return KForm(1, g.g @ np.asarray(v, dtype=float))


def interior_product(x, a: KForm) -> KForm:
    """Contraction of a form with a vector in its first slot."""
    if a.degree == 0:
        raise DegreeError("interior product of a 0-form is undefined")
    x = np.asarray(x, dtype=float)
    if a.degree == 1:
        return KForm(0, np.array([float(np.dot(a.coeffs, x))]))
    if a.degree == 2:
        return KForm(1, np.cross(a.coeffs, x))
    return KForm(2, a.coeffs[0] * x)


def form_inner(g: TangentMetric, a: KForm, b: KForm) -> float:
    """Pointwise metric inner product of two forms of equal degree."""
    if a.degree != b.degree:
        raise DegreeError("inner product needs equal degrees")
    if a.degree == 0:
        return float(a.coeffs[0] * b.coeffs[0])
    if a.degree == 1:
        return float(a.coeffs @ g.inverse @ b.coeffs)
    if a.degree == 2:
        det = g.sqrt_det**2
        return float(a.coeffs @ g.g @ b.coeffs) / det
    return float(a.coeffs[0] * b.coeffs[0]) / g.sqrt_det**2


@dataclass(frozen=True)
class IdentityReport:
    """Residuals of the norm and reconstruction identities for a 2-form."""

    X: np.ndarray
    residual_identity: float
    residual_reconstruction: float


def two_form_identities(g: TangentMetric, alpha: KForm) -> IdentityReport:
    """Check the two pointwise identities tying a 2-form to its dual vector.

    With ``X = sharp(g, star(alpha))`` the wedge of alpha with its star
    equals ``g(X, X)`` times the volume form, and alpha is recovered as the
    contraction of the volume form with X. Returns both residuals; each is
    bounded by ``1e-12 * (1 + |alpha|^2)`` for exact inputs.
    """
    if alpha.degree != 2:
        raise DegreeError(f"expected a 2-form, got degree {alpha.degree}")
    star_alpha = hodge_star(g, alpha)
    X = sharp(g, star_alpha)
    vol = hodge_star(g, KForm(0, [1.0]))
    lhs = wedge(alpha, star_alpha).coeffs[0]
    rhs = float(X @ g.g @ X) * vol.coeffs[0]
    reconstruction = alpha - interior_product(X, vol)
    return IdentityReport(
        X=X,
        residual_identity=abs(lhs - rhs),
        residual_reconstruction=float(np.max(np.abs(reconstruction.coeffs))),
    )


def _require_nondegenerate(omega: KForm):
    scale = omega.norm()
    if scale <= DEGENERACY_THRESHOLD * (1.0 + scale):
        raise DegenerateFormError(
            "2-form vanishes below threshold; kernel/leaf structure undefined there"
        )


def pointwise_kernel_split(g: TangentMetric, omega: KForm, v):
    """Split a vector into its component along ker(omega) and ker(star omega).

    The kernel of a nonvanishing 2-form is the line spanned by the vector R
    metric-dual to minus its star; the kernel of the star is the metric
    orthogonal complement (the leaf plane). Returns ``(v_ker_omega,
    v_ker_star)`` with ``v == v_ker_omega + v_ker_star`` exactly.
    """
    if omega.degree != 2:
        raise DegreeError(f"expected a 2-form, got degree {omega.degree}")
    _require_nondegenerate(omega)
    v = np.asarray(v, dtype=float)
    R = sharp(g, hodge_star(g, KForm(2, -omega.coeffs)))
    gR = g.g @ R
    v_parallel = (float(gR @ v) / float(gR @ R)) * R
    return v_parallel, v - v_parallel


def leaf_complex_structure(g: TangentMetric, omega: KForm, u, *, tol=1e-8):
    """Rotate a leaf-tangent vector by the compatible complex structure.

    The map j is defined on the plane ker(star omega) by requiring
    ``g(j u, v) == omega(u, v) / |R|``; it squares to minus the identity,
    preserves the metric, and makes ``omega(u, j u)`` positive for nonzero
    u (the rotation direction is fixed by that positivity).
    """
    if omega.degree != 2:
        raise DegreeError(f"expected a 2-form, got degree {omega.degree}")
    _require_nondegenerate(omega)
    u = np.asarray(u, dtype=float)
    star_omega = hodge_star(g, omega)
    scale = star_omega.norm() * float(np.linalg.norm(u))
    if abs(float(star_omega.coeffs @ u)) > tol * (1.0 + scale):
        raise TangencyError("vector is not tangent to the leaf plane")
    R = sharp(g, KForm(1, -star_omega.coeffs))
    norm_R = float(np.sqrt(R @ g.g @ R))
    return (g.inverse @ np.cross(omega.coeffs, u)) / norm_R


@dataclass(frozen=True)
class AnalyticField:
    """Smooth k-form field on (a subset of) R^3, sampled pointwise.

    ``fn`` maps a 3-point to the coefficient array of the declared degree.
    ``singularities`` lists points the field must not be evaluated near;
    ``fd_step`` is the central-difference step used by
    :func:`fd_exterior_derivative`, in the same length units as points.
    """

    degree: int
    fn: Callable[[np.ndarray], Sequence[float]]
    fd_step: float = 1e-3
    singularities: tuple = ()

    def __post_init__(self):
        if self.degree not in COEFF_LENGTH:
            raise DegreeError(f"degree must be in 0..3, got {self.degree}")
        if not self.fd_step > 0:
            raise ValueError("fd_step must be positive")

    def eval(self, p) -> KForm:
        p = np.asarray(p, dtype=float)
        coeffs = np.atleast_1d(np.asarray(self.fn(p), dtype=float))
        if coeffs.shape != (COEFF_LENGTH[self.degree],):
            raise DegreeError(
                f"field declared degree {self.degree} but returned "
                f"{coeffs.shape[0]} coefficients"
            )
        return KForm(self.degree, coeffs)

    def distance_to_singularities(self, p) -> float:
        if not self.singularities:
            return np.inf
        p = np.asarray(p, dtype=float)
        return min(float(np.linalg.norm(p - np.asarray(s, float))) for s in self.singularities)


def _partial(field: AnalyticField, p, axis):
    h = field.fd_step
    step = np.zeros(3)
    step[axis] = h
    fp = np.atleast_1d(np.asarray(field.fn(p + step), dtype=float))
    fm = np.atleast_1d(np.asarray(field.fn(p - step), dtype=float))
    return (fp - fm) / (2.0 * h)


def fd_exterior_derivative(field: AnalyticField, p) -> KForm:
    """Second-order central-difference exterior derivative of a field at p."""
    if field.degree >= 3:
        raise DegreeError("exterior derivative of a 3-form exceeds dimension 3")
    p = np.asarray(p, dtype=float)
    if field.distance_to_singularities(p) <= 2.0 * field.fd_step:
        raise SingularityError(
            f"point {p.tolist()} within 2*fd_step of a declared singularity"
        )
    d = [_partial(field, p, axis) for axis in range(3)]
    if field.degree == 0:
        return KForm(1, np.array([d[0][0], d[1][0], d[2][0]]))
    if field.degree == 1:
        return KForm(
            2,
            np.array(
                [
                    d[1][2] - d[2][1],
                    d[2][0] - d[0][2],
                    d[0][1] - d[1][0],
                ]
            ),
        )
    return KForm(3, np.array([d[0][0] + d[1][1] + d[2][2]]))


@dataclass(frozen=True)
class NewtonPointValues:
    """Point-mass field quantities at a single point (mass m0 at the origin)."""

    sigma_val: KForm
    star_sigma_val: KForm
    R_val: np.ndarray
    phi_val: float


def newton_oracle(m0: float, p) -> NewtonPointValues:
    """Closed-form inverse-square field of a point mass m0 at the origin.

    In units where the gravitational constant is 1/(4 pi): the flux 2-form
    integrates to m0 over any sphere about the origin, its star is the
    differential of the potential ``-m0 / (4 pi r)``, and the force field
    on a unit test mass is ``-m0 p / (4 pi r^3)``.
    """
    p = np.asarray(p, dtype=float)
    r = float(np.linalg.norm(p))
    if r == 0.0:
        raise SingularityError("point-mass field is singular at the origin")
    scale = m0 / (4.0 * np.pi)
    sigma = scale * p / r**3
    return NewtonPointValues(
        sigma_val=KForm(2, sigma),
        star_sigma_val=KForm(1, sigma),
        R_val=-sigma,
        phi_val=-scale / r,
    )


def random_spd_metric(rng) -> TangentMetric:
    """Random symmetric positive definite metric, exactly symmetric as stored."""
    a = rng.standard_normal((3, 3))
    m = a @ a.T + 0.1 * np.eye(3)
    return TangentMetric(0.5 * (m + m.T))


def property_suite(trials: int = 1000, seed: int = 0) -> dict:
    """Randomized battery of the pointwise identities; returns max residuals.

    Each trial draws a random SPD metric and random forms and checks: the
    star squares to the identity on every degree, a 2-form satisfies both
    identities tying it to its dual vector, the star's defining pairing on
    1-forms, the kernel split (orthogonality, exact resummation,
    1-dimensional kernel direction), and the leaf complex structure
    (squares to -1, isometric, positively tamed). All residuals are
    relative and should sit at rounding level (<= 1e-12).
    """
    rng = np.random.default_rng(seed)
    worst = {
        "star_square": 0.0,
        "norm_identity": 0.0,
        "reconstruction": 0.0,
        "star_pairing": 0.0,
        "split_orthogonality": 0.0,
        "split_resum": 0.0,
        "split_kernel_direction": 0.0,
        "j_square": 0.0,
        "j_isometry": 0.0,
        "j_taming_min": np.inf,
    }
    for _ in range(trials):
        g = random_spd_metric(rng)
        for degree in range(4):
            a = KForm(degree, rng.standard_normal(COEFF_LENGTH[degree]))
            rt = hodge_star(g, hodge_star(g, a))
            worst["star_square"] = max(
                worst["star_square"],
                float(np.max(np.abs(rt.coeffs - a.coeffs))) / (1.0 + a.norm()),
            )
        alpha = KForm(2, rng.standard_normal(3))
        rep = two_form_identities(g, alpha)
        scale = 1.0 + alpha.norm() ** 2
        worst["norm_identity"] = max(worst["norm_identity"], rep.residual_identity / scale)
        worst["reconstruction"] = max(
            worst["reconstruction"], rep.residual_reconstruction / scale
        )

        beta = KForm(1, rng.standard_normal(3))
        gamma = KForm(1, rng.standard_normal(3))
        lhs = wedge(beta, hodge_star(g, gamma)).coeffs[0]
        rhs = form_inner(g, beta, gamma) * g.sqrt_det
        worst["star_pairing"] = max(
            worst["star_pairing"],
            abs(lhs - rhs) / (1.0 + beta.norm() * gamma.norm()),
        )

        v = rng.standard_normal(3)
        v_ker, v_leaf = pointwise_kernel_split(g, alpha, v)
        R = sharp(g, hodge_star(g, KForm(2, -alpha.coeffs)))
        vscale = 1.0 + float(np.linalg.norm(v))
        worst["split_orthogonality"] = max(
            worst["split_orthogonality"], abs(v_ker @ g.g @ v_leaf) / vscale**2
        )
        worst["split_resum"] = max(
            worst["split_resum"],
            float(np.max(np.abs(v_ker + v_leaf - v))) / vscale,
        )
        cross = np.linalg.norm(np.cross(v_ker, R))
        worst["split_kernel_direction"] = max(
            worst["split_kernel_direction"],
            cross / ((np.linalg.norm(v_ker) + 1e-30) * np.linalg.norm(R) + 1e-30)
            if np.linalg.norm(v_ker) > 1e-13 * vscale
            else 0.0,
        )

        u = rng.standard_normal(3)
        _, u = pointwise_kernel_split(g, alpha, u)  # leaf-tangent part
        unorm = float(np.linalg.norm(u))
        if unorm > 1e-8:
            ju = leaf_complex_structure(g, alpha, u)
            jju = leaf_complex_structure(g, alpha, ju)
            worst["j_square"] = max(
                worst["j_square"], float(np.max(np.abs(jju + u))) / unorm
            )
            worst["j_isometry"] = max(
                worst["j_isometry"],
                abs(float(ju @ g.g @ ju) - float(u @ g.g @ u)) / unorm**2,
            )
            taming = float(np.dot(np.cross(alpha.coeffs, u), ju))  # omega(u, ju)
            worst["j_taming_min"] = min(
                worst["j_taming_min"], taming / (unorm**2 * alpha.norm() + 1e-300)
            )
    tol = 1e-12
    passed = (
        max(
            worst["star_square"],
            worst["norm_identity"],
            worst["reconstruction"],
            worst["star_pairing"],
            worst["split_orthogonality"],
            worst["split_resum"],
            worst["split_kernel_direction"],
            worst["j_square"],
            worst["j_isometry"],
        )
        <= tol
        and worst["j_taming_min"] > 0.0
    )
    worst["trials"] = trials
    worst["tolerance"] = tol
    worst["passed"] = bool(passed)
    return worst


def constant_field(degree: int, coeffs) -> AnalyticField:
    """Field with the same coefficients at every point."""
    coeffs = np.atleast_1d(np.asarray(coeffs, dtype=float)).copy()
    return AnalyticField(degree, lambda p: coeffs)


def newton_sigma_field(m0: float, fd_step: float = 1e-3) -> AnalyticField:
    """Flux 2-form of a point mass at the origin (closed away from it)."""
    return AnalyticField(
        2,
        lambda p: newton_oracle(m0, p).sigma_val.coeffs,
        fd_step=fd_step,
        singularities=((0.0, 0.0, 0.0),),
    )


def newton_star_sigma_field(m0: float, fd_step: float = 1e-3) -> AnalyticField:
    """Star of the point-mass flux form; equals d of the potential."""
    return AnalyticField(
        1,
        lambda p: newton_oracle(m0, p).star_sigma_val.coeffs,
        fd_step=fd_step,
        singularities=((0.0, 0.0, 0.0),),
    )


def newton_potential_field(m0: float, fd_step: float = 1e-3) -> AnalyticField:
    """Potential of a point mass at the origin, as a 0-form field."""
    return AnalyticField(
        0,
        lambda p: [newton_oracle(m0, p).phi_val],
        fd_step=fd_step,
        singularities=((0.0, 0.0, 0.0),),
    )
