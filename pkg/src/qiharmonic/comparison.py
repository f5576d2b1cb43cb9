"""Triangle angle bounds, Hessian bounds for distance functions, and the
bounded-Laplacian evaluator, each as a checkable inequality.

Angles being verified are always measured from log-map vectors; the closed
form :func:`plane_triangle_angle` is kept as an independent oracle.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateTriangle, GeometryError, NotApplicable
from .geometry import CurvaturePinching, HPoint, TangentVector, dist, exp, log
from .geometry import hyperboloid as hb

DEGENERATE_SIDE = 1e-8
FD_STEP = 1e-3
HESSIAN_TOL = 1e-4


@dataclass(frozen=True)
class BoundCheck:
    """One verified inequality ``measured <= bound`` (or ``>=`` when ``sense == ">="``).

    The tolerance is split into an analytic slack (rounding, truncation), a
    discretization term and a sampling term; ``passed`` means
    ``margin >= -tolerance``.
    """

    measured: float
    bound: float
    context: str = ""
    tol_analytic: float = 0.0
    tol_mesh: float = 0.0
    tol_sampling: float = 0.0
    samples: int = 1
    sense: str = "<="

    def __post_init__(self):
        if self.sense not in ("<=", ">="):
            raise GeometryError(f"sense must be '<=' or '>=', got {self.sense!r}")

    @property
    def margin(self):
        if self.sense == ">=":
            return self.measured - self.bound
        return self.bound - self.measured

    @property
    def tolerance(self):
        return self.tol_analytic + self.tol_mesh + self.tol_sampling

    @property
    def passed(self):
        return bool(self.margin >= -self.tolerance)

    def as_row(self):
        return {
            "context": self.context,
            "sense": self.sense,
            "measured": float(self.measured),
            "bound": float(self.bound),
            "margin": float(self.margin),
            "tol_analytic": float(self.tol_analytic),
            "tol_mesh": float(self.tol_mesh),
            "tol_sampling": float(self.tol_sampling),
            "samples": int(self.samples),
            "status": "pass" if self.passed else "fail",
        }


@dataclass(frozen=True)
class Triangle:
    x0: HPoint
    x1: HPoint
    x2: HPoint
    l0: float = field(init=False)
    l1: float = field(init=False)
    l2: float = field(init=False)

    def __post_init__(self):
        l0, l1, l2 = dist(self.x1, self.x2), dist(self.x0, self.x1), dist(self.x0, self.x2)
        if min(l0, l1, l2) < DEGENERATE_SIDE:
            raise DegenerateTriangle(f"side lengths {l0:.3g}, {l1:.3g}, {l2:.3g} include a degenerate side")
        object.__setattr__(self, "l0", l0)
        object.__setattr__(self, "l1", l1)
        object.__setattr__(self, "l2", l2)

    @property
    def m(self):
        """Gromov product (x1|x2)_{x0}."""
        return 0.5 * (self.l1 + self.l2 - self.l0)

    def angle_at_x0(self):
        return float(vertex_angles(self.x0.coords, self.x1.coords, self.x2.coords))


def _sinh_ratio(length, m):
    """sinh(length - m) / sinh(length), without overflow for long sides."""
    length = np.asarray(length, dtype=float)
    return np.exp(-m) * -np.expm1(-2.0 * (length - m)) / -np.expm1(-2.0 * length)


def plane_triangle_angle(l0, l1, l2):
    """Angle opposite ``l0`` in the curvature -1 triangle with sides ``l0, l1, l2``.

    Uses ``sin^2(theta/2) = sinh(l1-m) sinh(l2-m) / (sinh l1 sinh l2)`` with
    ``m = (l1 + l2 - l0) / 2``.  Works elementwise on arrays.
    """
    l0, l1, l2 = (np.asarray(v, dtype=float) for v in (l0, l1, l2))
    if np.any(l1 < DEGENERATE_SIDE) or np.any(l2 < DEGENERATE_SIDE) or np.any(l0 < 0.0):
        raise DegenerateTriangle("sides adjacent to the angle must be positive")
    m = 0.5 * (l1 + l2 - l0)
    slack = 1e-12 * (l0 + l1 + l2)
    if np.any(m < -slack) or np.any(m > np.minimum(l1, l2) + slack):
        raise GeometryError("side lengths violate the triangle inequality")
    m = np.clip(m, 0.0, np.minimum(l1, l2))
    s = _sinh_ratio(l1, m) * _sinh_ratio(l2, m)
    s = np.clip(s, 0.0, 1.0)
    out = 2.0 * np.arctan2(np.sqrt(s), np.sqrt(1.0 - s))
    return float(out) if out.ndim == 0 else out


def vertex_angles(x0, x1, x2):
    """Angle at ``x0`` between the geodesics to ``x1`` and ``x2`` (batched arrays)."""
    u1 = hb.logmap(x0, x1)
    u2 = hb.logmap(x0, x2)
    n1 = hb.tnorm(x0, u1)
    n2 = hb.tnorm(x0, u2)
    if np.any(n1 == 0.0) or np.any(n2 == 0.0):
        raise DegenerateTriangle("angle at a coincident vertex is undefined")
    u1 = u1 / n1[..., None]
    u2 = u2 / n2[..., None]
    return 2.0 * np.arctan2(hb.tnorm(x0, u1 - u2), hb.tnorm(x0, u1 + u2))


@dataclass
class AngleLemmaBatch:
    """Vectorized evaluation of the three angle inequalities on many triangles.

    Each part is stored as ``measured <= bound`` arrays; part c carries an
    applicability mask.
    """

    theta: np.ndarray
    m: np.ndarray
    a_measured: np.ndarray
    a_bound: np.ndarray
    b_measured: np.ndarray
    b_bound: np.ndarray
    c_measured: np.ndarray
    c_bound: np.ndarray
    c_applicable: np.ndarray
    a_tol: np.ndarray
    b_tol: float
    c_tol: np.ndarray

    def passed(self, part):
        measured, bound = getattr(self, f"{part}_measured"), getattr(self, f"{part}_bound")
        ok = bound - measured >= -getattr(self, f"{part}_tol")
        if part == "c":
            ok = ok | ~self.c_applicable
        return ok


def angle_lemma_batch(x0, x1, x2, pinching=CurvaturePinching()):
    x0, x1, x2 = (np.asarray(v, dtype=float) for v in (x0, x1, x2))
    l0 = hb.distance(x1, x2)
    l1 = hb.distance(x0, x1)
    l2 = hb.distance(x0, x2)
    if np.any(np.minimum(np.minimum(l0, l1), l2) < DEGENERATE_SIDE):
        raise DegenerateTriangle("batch contains a triangle with a degenerate side")
    m = 0.5 * (l1 + l2 - l0)
    theta = vertex_angles(x0, x1, x2)
    half = np.sin(0.5 * theta) ** 2
    prod1 = l1 - m  # (x0|x2)_{x1}
    prod2 = l2 - m  # (x0|x1)_{x2}
    c_meas = np.exp(-m)
    return AngleLemmaBatch(
        theta=theta,
        m=m,
        a_measured=l1 * half,
        a_bound=prod1,
        b_measured=theta,
        b_bound=4.0 * np.exp(-pinching.a * m),
        c_measured=c_meas,
        c_bound=theta,
        c_applicable=np.minimum(prod1, prod2) >= 1.0,
        a_tol=1e-9 * (1.0 + l1),
        b_tol=1e-9,
        c_tol=1e-12 + 1e-9 * c_meas,
    )


def _single(T: Triangle, pinching=CurvaturePinching()):
    return angle_lemma_batch(T.x0.coords, T.x1.coords, T.x2.coords, pinching)


def check_angle_gromov_lower(T: Triangle) -> BoundCheck:
    """d(x0,x1) sin^2(theta0/2) <= (x0|x2)_{x1}."""
    r = _single(T)
    return BoundCheck(float(r.a_measured), float(r.a_bound), "angle lemma a", tol_analytic=float(r.a_tol))


def check_angle_upper(T: Triangle, pinching: CurvaturePinching = CurvaturePinching()) -> BoundCheck:
    """theta0 <= 4 exp(-a (x1|x2)_{x0})."""
    r = _single(T, pinching)
    return BoundCheck(float(r.b_measured), float(r.b_bound), f"angle lemma b (a={pinching.a})", tol_analytic=r.b_tol)


def check_angle_lower(T: Triangle) -> BoundCheck:
    """exp(-(x1|x2)_{x0}) <= theta0, when both other Gromov products are >= 1."""
    r = _single(T)
    if not bool(r.c_applicable):
        raise NotApplicable(
            f"min((x0|x1)_x2, (x0|x2)_x1) = {min(T.l1, T.l2) - T.m:.4g} < 1"
        )
    return BoundCheck(float(r.c_measured), float(r.c_bound), "angle lemma c", tol_analytic=float(r.c_tol))


def _second_difference(fn, h):
    """Fourth-order central second difference of ``fn`` at 0."""
    return (-fn(2 * h) + 16 * fn(h) - 30 * fn(0.0) + 16 * fn(-h) - fn(-2 * h)) / (12 * h * h)


def directional_second_difference(func, x: HPoint, u: TangentVector, h=FD_STEP):
    """Second derivative of ``func`` along the geodesic ``t -> exp_x(t u)``.

    Along a geodesic the covariant Hessian is the ordinary second derivative,
    so this estimates ``D^2 func(u, u)`` for unit ``u``.
    """
    return float(_second_difference(lambda t: func(exp(x, t * u)), h))


@dataclass(frozen=True)
class HessianChecks:
    dist_lower: BoundCheck
    dist_upper: BoundCheck
    radial: BoundCheck
    square: BoundCheck

    def __iter__(self):
        return iter((self.dist_lower, self.dist_upper, self.radial, self.square))

    @property
    def passed(self):
        return all(c.passed for c in self)


def check_hessian_dist(x0: HPoint, x: HPoint, pinching: CurvaturePinching = CurvaturePinching(),
                       direction: TangentVector | None = None, h=FD_STEP, tol=HESSIAN_TOL) -> HessianChecks:
    """Finite-difference check of the Hessian bounds for d_{x0} and d_{x0}^2 at ``x``.

    The transverse direction is the unit vector at ``x`` orthogonal to the
    radial one (in H^k with k > 2, the first such frame vector).  ``direction``
    selects the (arbitrary, unit-normalized) probe for the d^2 check; the
    radial direction is used when it is omitted.
    """
    d = dist(x0, x)
    if d < DEGENERATE_SIDE:
        raise GeometryError("Hessian of d_{x0} is undefined at x0")
    radial = -log(x, x0).unit()
    coords = hb.to_frame(x.coords, radial.components)
    # any frame vector orthogonal to the radial one
    k = coords.size
    basis = np.eye(k)[np.argmin(np.abs(coords))]
    perp = basis - coords * (basis @ coords)
    perp /= np.linalg.norm(perp)
    transverse = TangentVector(x, hb.from_frame(x.coords, perp))

    def d_x0(y):
        return dist(x0, y)

    def d2_x0(y):
        return dist(x0, y) ** 2

    trans = directional_second_difference(d_x0, x, transverse, h)
    rad = directional_second_difference(d_x0, x, radial, h)
    probe = radial if direction is None else direction.unit()
    sq = directional_second_difference(d2_x0, x, probe, h)
    a, b = pinching.a, pinching.b
    lower = a / np.tanh(a * d)
    upper = b / np.tanh(b * d)
    return HessianChecks(
        dist_lower=BoundCheck(lower, trans, "D2 d transverse >= a coth(a d)", tol_analytic=tol),
        dist_upper=BoundCheck(trans, upper, "D2 d transverse <= b coth(b d)", tol_analytic=tol),
        radial=BoundCheck(abs(rad), 0.0, "D2 d radial = 0", tol_analytic=tol),
        square=BoundCheck(2.0, sq, "D2 d^2 >= 2", tol_analytic=tol),
    )


def hessian_square_at(x0: HPoint, x: HPoint, direction: TangentVector, h=FD_STEP):
    """Second difference of d_{x0}^2 at ``x`` along ``direction`` (normalized)."""
    return directional_second_difference(lambda y: dist(x0, y) ** 2, x, direction.unit(), h)


def laplacian_bound_value(M, a, dist_to_boundary):
    """(M / a) d(x, boundary): sup bound for a function with |Laplacian| <= M vanishing on the sphere."""
    if a <= 0:
        raise GeometryError("curvature bound a must be positive")
    if M < 0 or np.any(np.asarray(dist_to_boundary) < 0):
        raise GeometryError("M and the distance to the boundary must be nonnegative")
    return M / a * dist_to_boundary
