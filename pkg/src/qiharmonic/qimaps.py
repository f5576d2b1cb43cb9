"""Quasiisometric maps between hyperbolic spaces.

Generators (isometries, bounded perturbations of isometries, a log-polar
shear of the upper half plane), totally geodesic embeddings, empirical
certification of the quasiisometry constants, and the center-of-mass
smoothing operator.

Maps act on stacked hyperboloid coordinates ``(..., k+1) -> (..., m+1)``;
calling a map on an :class:`HPoint` returns an :class:`HPoint`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.integrate import quad

from .errors import ConfigError, GeometryError, SmoothingBoundViolation
from .geometry import HPoint
from .geometry import hyperboloid as hb
from .geometry.core import embed_coords

SAMPLE_BLOCK = 1024


@dataclass(frozen=True)
class QuasiIsometricMap:
    """Evaluable map H^k -> H^m with its claimed constants.

    ``c`` is the multiplicative (and, for smoothed maps, derivative) constant,
    ``additive`` the additive one: ``d(x,x')/c - additive <= d(f x, f x') <= c d(x,x') + additive``.
    ``spec`` is the JSON-serializable recipe that rebuilds the map.
    """

    evaluator: Callable[[np.ndarray], np.ndarray]
    source_dim: int
    target_dim: int
    c: float = 1.0
    additive: float = 0.0
    description: str = ""
    spec: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.c < 1.0:
            raise GeometryError(f"quasiisometry constant must be >= 1, got {self.c}")
        if self.additive < 0.0:
            raise GeometryError("additive constant must be nonnegative")

    def evaluate(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.source_dim + 1:
            raise GeometryError(f"map expects points of H^{self.source_dim}, got trailing size {x.shape[-1]}")
        return self.evaluator(x)

    def __call__(self, x):
        if isinstance(x, HPoint):
            return HPoint(self.evaluate(x.coords), x.curvature_scale)
        return self.evaluate(x)

    def with_constants(self, c=None, additive=None, description=None):
        return QuasiIsometricMap(
            self.evaluator,
            self.source_dim,
            self.target_dim,
            self.c if c is None else float(c),
            self.additive if additive is None else float(additive),
            self.description if description is None else description,
            dict(self.spec),
        )

    @property
    def reach(self):
        """max(c, additive): the single constant of the coarse definition."""
        return max(self.c, self.additive)


# --- isometries -----------------------------------------------------------

def lorentz_j(n):
    J = np.eye(n + 1)
    J[0, 0] = -1.0
    return J


def _rotation(dim, angles):
    """Product of Givens rotations in the coordinate planes (i, j), i < j, in lexicographic order."""
    R = np.eye(dim)
    planes = [(i, j) for i in range(dim) for j in range(i + 1, dim)]
    if len(angles) > len(planes):
        raise GeometryError(f"H^{dim} has only {len(planes)} rotation planes, got {len(angles)} angles")
    for (i, j), a in zip(planes, angles):
        G = np.eye(dim)
        G[i, i] = G[j, j] = math.cos(a)
        G[i, j] = -math.sin(a)
        G[j, i] = math.sin(a)
        R = R @ G
    return R


def isometry_matrix(dim, translation=0.0, angles=()):
    """Lorentz matrix: rotation about O, then translation of O to exp_O(translation)."""
    t = np.zeros(dim)
    if np.ndim(translation) == 0:
        t[0] = float(translation)
    else:
        t[: len(translation)] = np.asarray(translation, dtype=float)
    rot = np.eye(dim + 1)
    rot[1:, 1:] = _rotation(dim, list(angles))
    target = hb.expmap(hb.origin(dim), np.concatenate([[0.0], t]))
    return hb.boost_matrix(target) @ rot


@dataclass(frozen=True)
class Isometry:
    """Lorentz transformation of H^n, usable both as a map and as a matrix."""

    matrix: np.ndarray

    @property
    def dim(self):
        return self.matrix.shape[0] - 1

    def __call__(self, x):
        if isinstance(x, HPoint):
            return HPoint(self(x.coords), x.curvature_scale)
        return hb.project(np.asarray(x, dtype=float) @ self.matrix.T)

    def inverse(self):
        J = lorentz_j(self.dim)
        return Isometry(J @ self.matrix.T @ J)

    def compose(self, other):
        """self after other."""
        return Isometry(self.matrix @ other.matrix)

    def push_vector(self, v):
        return np.asarray(v, dtype=float) @ self.matrix.T


def make_isometry(dim=2, translation=0.0, angles=()) -> QuasiIsometricMap:
    iso = Isometry(isometry_matrix(dim, translation, angles))
    spec = {"generator": "isometry", "dim": dim,
            "translation": np.atleast_1d(np.asarray(translation, dtype=float)).tolist(),
            "angles": [float(a) for a in angles]}
    return QuasiIsometricMap(iso, dim, dim, 1.0, 0.0, "isometry", spec)


def isometry_of(f: QuasiIsometricMap) -> Isometry:
    if isinstance(f.evaluator, Isometry):
        return f.evaluator
    raise GeometryError(f"{f.description!r} is not an isometry")


# --- bounded perturbation of an isometry -----------------------------------

def perturbation_field(y, omega, phases):
    """Unit-bounded smooth vector field on H^m in frame coordinates.

    Component j is ``sin(omega * asinh(y_j') + phase_j) / sqrt(m)`` where
    ``y_j'`` cycles through the spatial coordinates; each ``asinh(y_j)`` is
    1-Lipschitz on H^m so the field has derivatives bounded by ``omega`` up
    to the frame's own (bounded) rotation.
    """
    m = y.shape[-1] - 1
    idx = np.arange(m)
    s = np.arcsinh(y[..., 1 + idx])
    return np.sin(omega * s + phases) / math.sqrt(m)


def make_perturbed_isometry(base: QuasiIsometricMap, amplitude: float, omega: float,
                            phases=None) -> QuasiIsometricMap:
    """``f(x) = exp_{base(x)}(amplitude * V(base(x)))`` with ``|V| <= 1``."""
    if amplitude < 0 or omega < 0:
        raise GeometryError("amplitude and frequency must be nonnegative")
    m = base.target_dim
    ph = np.linspace(0.3, 2.1, m) if phases is None else np.asarray(phases, dtype=float)
    if ph.shape != (m,):
        raise GeometryError(f"need {m} phases")

    def evaluator(x):
        y = base.evaluate(x)
        if amplitude == 0.0:
            return y
        coeffs = amplitude * perturbation_field(y, omega, ph)
        return hb.expmap(y, hb.from_frame(y, coeffs))

    c = base.c * (math.cosh(amplitude) + (omega + 1.0) * math.sinh(amplitude))
    spec = {"generator": "perturbed_isometry", "base": base.spec, "amplitude": float(amplitude),
            "omega": float(omega), "phases": ph.tolist()}
    return QuasiIsometricMap(evaluator, base.source_dim, m, c, base.additive + 2.0 * amplitude,
                             f"perturbed isometry (B={amplitude}, omega={omega})", spec)


# --- log-polar shear of the upper half plane ------------------------------

def to_upper_half_plane(x):
    """Hyperboloid H^2 -> upper half plane ``(u, v)``, v > 0."""
    x = np.asarray(x, dtype=float)
    x0, x1, x2 = x[..., 0], x[..., 1], x[..., 2]
    # x0 - x1 = (1 + x2^2) / (x0 + x1) avoids cancellation when x1 > 0
    diff = np.where(x1 > 0, (1.0 + x2 * x2) / (x0 + x1), x0 - x1)
    return x2 / diff, 1.0 / diff


def from_upper_half_plane(u, v):
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    r2 = u * u + v * v
    out = np.stack([(r2 + 1.0) / (2 * v), (r2 - 1.0) / (2 * v), u / v], axis=-1)
    return hb.project(out)


def shear_operator_norm(lam):
    """Operator norm of [[1, lam], [0, 1]]."""
    return 0.5 * (abs(lam) + math.sqrt(lam * lam + 4.0))


def make_horocyclic_shear(lam: float) -> QuasiIsometricMap:
    """Shear ``z -> z exp(lam (arg z - pi/2))`` of the upper half plane.

    In the coordinates ``(log|z|, arg z)`` the metric is
    ``(du^2 + dtheta^2) / sin^2(theta)`` and the map is ``(u, theta) ->
    (u + lam (theta - pi/2), theta)``, so its differential in an orthonormal
    frame is the constant matrix ``[[1, lam], [0, 1]]``: bi-Lipschitz with
    constant ``shear_operator_norm(lam)``, and not an isometry for lam != 0.
    The geodesic ``arg z = pi/2`` is fixed pointwise.
    """

    def evaluator(x):
        u, v = to_upper_half_plane(x)
        theta = np.arctan2(v, u)
        scale = np.exp(lam * (theta - 0.5 * np.pi))
        return from_upper_half_plane(u * scale, v * scale)

    spec = {"generator": "shear", "lam": float(lam)}
    return QuasiIsometricMap(evaluator, 2, 2, shear_operator_norm(lam), 0.0, f"log-polar shear (lambda={lam})", spec)


# --- embeddings ------------------------------------------------------------

def compose_with_embedding(f: QuasiIsometricMap, m: int) -> QuasiIsometricMap:
    """f followed by the totally geodesic inclusion H^{target} -> H^m."""
    if m < f.target_dim:
        raise GeometryError(f"cannot embed H^{f.target_dim} into H^{m}")
    if m == f.target_dim:
        return f
    spec = dict(f.spec)
    spec["target_dim"] = m
    return QuasiIsometricMap(lambda x: embed_coords(f.evaluate(x), m), f.source_dim, m, f.c, f.additive,
                             f"{f.description} into H^{m}", spec)


def compose_with_isometry(iso: Isometry, f: QuasiIsometricMap) -> QuasiIsometricMap:
    """iso after f (iso acts on the target)."""
    if iso.dim != f.target_dim:
        raise GeometryError("isometry dimension does not match the map's target")
    return QuasiIsometricMap(lambda x: iso(f.evaluate(x)), f.source_dim, f.target_dim, f.c, f.additive,
                             f"isometry after {f.description}", {"generator": "composed", "inner": f.spec})


# --- empirical certification --------------------------------------------

@dataclass(frozen=True)
class DistortionEstimate:
    c_lower: float
    A_lower: float
    samples: int


@dataclass(frozen=True)
class PairSampler:
    """Deterministic stream of point pairs in B(O, radius).

    The first point is volume-distributed, the second sits at a log-uniform
    distance in ``[min_sep, max_sep]`` in a uniform direction, so both the
    local (derivative) and the large-scale behaviour are probed.  Samples
    are generated in fixed blocks with per-block seeds, so the first n pairs
    do not depend on how many are requested.
    """

    seed: int
    dim: int = 2
    radius: float = 5.0
    min_sep: float = 1e-2
    max_sep: float | None = None

    def _block(self, b):
        rng = np.random.default_rng(np.random.SeedSequence([self.seed, b]))
        x = hb.sample_points(rng, SAMPLE_BLOCK, self.dim, self.radius)
        hi = 2.0 * self.radius if self.max_sep is None else self.max_sep
        sep = np.exp(rng.uniform(math.log(self.min_sep), math.log(hi), SAMPLE_BLOCK))
        direction = rng.standard_normal((SAMPLE_BLOCK, self.dim))
        direction *= (sep / np.linalg.norm(direction, axis=1))[:, None]
        return x, hb.expmap(x, hb.from_frame(x, direction))

    def pairs(self, n):
        blocks = [self._block(b) for b in range((n + SAMPLE_BLOCK - 1) // SAMPLE_BLOCK)]
        x = np.concatenate([b[0] for b in blocks])[:n]
        y = np.concatenate([b[1] for b in blocks])[:n]
        return x, y


@dataclass(frozen=True)
class TripleSampler:
    """Deterministic stream of triples (x0, x1, x2) in B(O, radius).

    Half of the triples have x2 close to x1 (large Gromov products at x0),
    the rest are independent volume samples.
    """

    seed: int
    dim: int = 2
    radius: float = 5.0

    def _block(self, b):
        rng = np.random.default_rng(np.random.SeedSequence([self.seed, b, 3]))
        x0, x1, x2 = (hb.sample_points(rng, SAMPLE_BLOCK, self.dim, self.radius) for _ in range(3))
        near = rng.random(SAMPLE_BLOCK) < 0.5
        step = rng.standard_normal((SAMPLE_BLOCK, self.dim))
        step *= (rng.uniform(0.0, 2.0, SAMPLE_BLOCK) / np.linalg.norm(step, axis=1))[:, None]
        x2 = np.where(near[:, None], hb.expmap(x1, hb.from_frame(x1, step)), x2)
        return x0, x1, x2

    def triples(self, n):
        blocks = [self._block(b) for b in range((n + SAMPLE_BLOCK - 1) // SAMPLE_BLOCK)]
        return tuple(np.concatenate([blk[i] for blk in blocks])[:n] for i in range(3))


C_GRID_STEP = 0.005
C_GRID_MAX = 50.0


def _grid_ceil(value):
    # measured ratios carry relative rounding and finite-difference noise below 1e-8
    j = math.ceil((value * (1.0 - 1e-7) - 1.0) / C_GRID_STEP)
    return 1.0 + max(j, 0) * C_GRID_STEP


def _additive_needed(c, d, df):
    return float(max(np.max(df - c * d, initial=0.0), np.max(d / c - df, initial=0.0), 0.0))


def local_stretch(f: QuasiIsometricMap, x, h=1e-4):
    """Largest and smallest singular values of Df at each point of ``x``.

    The Jacobian is formed in the boost frames at x and f(x) from central
    differences along the k frame directions.
    """
    x = np.asarray(x, dtype=float)
    k = f.source_dim
    fx = f.evaluate(x)
    cols = []
    for j in range(k):
        e = np.zeros(x.shape[:-1] + (k,))
        e[..., j] = h
        v = hb.from_frame(x, e)
        fp = f.evaluate(hb.expmap(x, v))
        fm = f.evaluate(hb.expmap(x, -v))
        cols.append(hb.to_frame(fx, hb.logmap(fx, fp) - hb.logmap(fx, fm)) / (2 * h))
    J = np.stack(cols, axis=-1)
    s = np.linalg.svd(J, compute_uv=False)
    return s[..., 0], s[..., -1]


def estimate_qi_constant(f: QuasiIsometricMap, sampler: PairSampler, n: int, local: bool = True) -> DistortionEstimate:
    """Least grid constants (c, additive) satisfying both inequalities on n sampled pairs.

    The grid is ``1 + 0.005 j``.  With ``local=True`` each sample also
    contributes the extreme singular values of Df at its first point (the
    limit of infinitesimally close pairs in the worst direction).  If the
    observed ratios ``d_f/d`` and ``d/d_f`` stay below 50, ``c_lower`` is the
    grid ceiling of the largest one and the additive constant is the (then
    negligible) residual violation.  Otherwise ``c_lower`` is the least grid
    c for which the single-constant form ``d/c - c <= d_f <= c d + c`` holds.
    Each sample's contribution depends on that sample alone, so both
    branches are nondecreasing in n.
    """
    if n < 1:
        raise ValueError("need at least one sample")
    x, y = sampler.pairs(n)
    d = hb.distance(x, y)
    df = hb.distance(f.evaluate(x), f.evaluate(y))
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(d > 0, np.maximum(df / d, np.where(df > 0, d / df, np.inf)), 1.0)
        if local:
            smax, smin = local_stretch(f, x)
            ratio = np.maximum(ratio, np.maximum(smax, np.where(smin > 0, 1.0 / smin, np.inf)))
    worst = float(np.max(ratio))
    if worst <= C_GRID_MAX:
        c = _grid_ceil(worst)
        return DistortionEstimate(c, _additive_needed(c, d, df), n)
    c = 1.0
    while _additive_needed(c, d, df) > c:
        c += C_GRID_STEP
    return DistortionEstimate(c, _additive_needed(c, d, df), n)


def gromov_products(x0, x1, x2):
    return 0.5 * (hb.distance(x0, x1) + hb.distance(x0, x2) - hb.distance(x1, x2))


def estimate_product_distortion(f: QuasiIsometricMap, c: float, sampler: TripleSampler, n: int) -> DistortionEstimate:
    """Largest violation A of ``g/c - A <= G <= c g + A`` over n sampled triples,
    with g the Gromov product in the domain and G in the image."""
    x0, x1, x2 = sampler.triples(n)
    g = gromov_products(x0, x1, x2)
    G = gromov_products(f.evaluate(x0), f.evaluate(x1), f.evaluate(x2))
    return DistortionEstimate(float(c), _additive_needed(c, g, G), n)


# --- bump profiles and smoothing --------------------------------------

def standard_profile(s):
    """exp(-1/(1-s)) on [0, 1), zero from 1 on (argument is the squared distance)."""
    s = np.asarray(s, dtype=float)
    inside = s < 1.0
    return np.where(inside, np.exp(-1.0 / np.where(inside, 1.0 - s, 1.0)), 0.0)


def flat_profile(s):
    s = np.asarray(s, dtype=float)
    return np.where(s <= 1.0, 1.0, 0.0)


PROFILES = {"standard": standard_profile, "flat": flat_profile}


def sphere_volume(k):
    """Volume of the unit sphere S^{k-1}."""
    return 2.0 * math.pi ** (k / 2) / math.gamma(k / 2)


@dataclass(frozen=True)
class BumpProfile:
    """alpha(d^2) with normalizer C, so C alpha(d^2(x, .)) dvol is a probability measure on H^k."""

    alpha: Callable[[np.ndarray], np.ndarray]
    C: float
    dim: int
    name: str = "custom"


def normalize_bump(alpha, dim=2, name="custom", tol=1e-10) -> BumpProfile:
    """Compute C from ``1/C = vol(S^{k-1}) * int_0^1 alpha(t^2) sinh^{k-1}(t) dt``."""
    val, _ = quad(lambda t: float(alpha(t * t)) * math.sinh(t) ** (dim - 1), 0.0, 1.0,
                  epsabs=tol, epsrel=tol, limit=200)
    total = sphere_volume(dim) * val
    if not total > 0:
        raise GeometryError("bump profile integrates to zero")
    return BumpProfile(alpha, 1.0 / total, dim, name)


def profile_by_name(name, dim=2) -> BumpProfile:
    if name not in PROFILES:
        raise ConfigError(f"unknown bump profile {name!r}; known: {sorted(PROFILES)}")
    return normalize_bump(PROFILES[name], dim, name)


def _fibonacci_sphere(n):
    i = np.arange(n) + 0.5
    z = 1.0 - 2.0 * i / n
    r = np.sqrt(1.0 - z * z)
    phi = math.pi * (3.0 - math.sqrt(5.0)) * i
    return np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=1)


@dataclass(frozen=True)
class PolarQuadrature:
    """Midpoint rule in geodesic polar coordinates over B(x, 1)."""

    n_radial: int = 16
    n_angular: int = 32

    def nodes(self, bump: BumpProfile):
        """Nodes at the origin of H^k (shape (P, k+1)) and weights summing to about 1."""
        k = bump.dim
        dt = 1.0 / self.n_radial
        t = (np.arange(self.n_radial) + 0.5) * dt
        if k == 2:
            phi = 2.0 * math.pi * np.arange(self.n_angular) / self.n_angular
            dirs = np.stack([np.cos(phi), np.sin(phi)], axis=1)
        elif k == 3:
            dirs = _fibonacci_sphere(self.n_angular)
        else:
            raise GeometryError("polar quadrature is implemented for H^2 and H^3 domains")
        dA = sphere_volume(k) / self.n_angular
        radial_w = bump.alpha(t * t) * np.sinh(t) ** (k - 1) * dt * dA * bump.C
        vec = np.zeros((self.n_radial, self.n_angular, k + 1))
        vec[..., 1:] = t[:, None, None] * dirs[None, :, :]
        pts = hb.expmap(np.broadcast_to(hb.origin(k), vec.shape), vec)
        w = np.broadcast_to(radial_w[:, None], (self.n_radial, self.n_angular))
        keep = w.reshape(-1) > 0
        return pts.reshape(-1, k + 1)[keep], w.reshape(-1)[keep]


def quadrature_nodes_at(x, local_nodes):
    """Move nodes given at the origin to each point of ``x`` with the boost at x."""
    B = hb.frame(x)  # (..., k, k+1)
    return hb.project(local_nodes[:, 0, None] * x[..., None, :] + np.einsum("pj,...jd->...pd", local_nodes[:, 1:], B))


def smooth(f: QuasiIsometricMap, bump: BumpProfile | None = None, quadrature: PolarQuadrature = PolarQuadrature(),
           tol: float = 1e-10, chunk: int = 256) -> QuasiIsometricMap:
    """Center-of-mass smoothing: f~(x) is the Karcher mean of f pushed forward
    from the measure C alpha(d^2(x, z)) dvol(z), discretized by ``quadrature``.

    Every evaluation checks ``d(f(x), f~(x)) <= 2 max(c, additive)`` and
    raises :class:`SmoothingBoundViolation` otherwise.
    """
    bump = profile_by_name("standard", f.source_dim) if bump is None else bump
    if bump.dim != f.source_dim:
        raise GeometryError("bump profile dimension does not match the map's domain")
    local, weights = quadrature.nodes(bump)
    reach = 2.0 * f.reach

    def evaluator(x):
        x = np.asarray(x, dtype=float)
        shape = x.shape[:-1]
        flat = x.reshape(-1, x.shape[-1])
        out = np.empty((flat.shape[0], f.target_dim + 1))
        for start in range(0, flat.shape[0], chunk):
            xs = flat[start:start + chunk]
            z = quadrature_nodes_at(xs, local)
            images = f.evaluate(z)
            center = f.evaluate(xs)
            # far from the origin the attainable residual grows like eps cosh(r)^2
            tol_x = np.maximum(tol, hb.precision_floor(center))
            y, _ = hb.karcher(images, np.broadcast_to(weights, images.shape[:-1]), init=center, tol=tol_x)
            gap = hb.distance(y, center)
            if np.any(gap > reach):
                i = int(np.argmax(gap))
                raise SmoothingBoundViolation(
                    f"d(f(x), f~(x)) = {gap[i]:.4g} exceeds 2c = {reach:.4g} at x = {xs[i].tolist()}"
                )
            out[start:start + chunk] = y
        return out.reshape(shape + (f.target_dim + 1,))

    spec = {"generator": "smoothed", "inner": f.spec, "profile": bump.name,
            "n_radial": quadrature.n_radial, "n_angular": quadrature.n_angular}
    return QuasiIsometricMap(evaluator, f.source_dim, f.target_dim, f.c, f.additive + 2.0 * reach,
                             f"smoothed {f.description}", spec)


# --- derivative certification -----------------------------------------

@dataclass(frozen=True)
class DerivativeCertificate:
    first: float
    second: float
    samples: int
    step: float
    min_stretch: float = 1.0


def _unit_directions(k, count):
    if k == 2:
        phi = math.pi * np.arange(count) / count
        return np.stack([np.cos(phi), np.sin(phi)], axis=1)
    return _fibonacci_sphere(2 * count)[:count]


def certify_derivatives(f: QuasiIsometricMap, points, h=1e-2, n_dirs=8) -> DerivativeCertificate:
    """Finite-difference sup of ||Df|| and ||D^2 f|| over ``points``.

    Along the geodesic ``t -> exp_x(t u)`` the first derivative is estimated
    by ``(log_{f x} f(x+) - log_{f x} f(x-)) / 2h`` and the covariant second
    derivative by ``(log_{f x} f(x+) + log_{f x} f(x-)) / h^2``.  Norms are
    maximized over ``n_dirs`` directions (for the second derivative this is
    the norm of the symmetric form).
    """
    x = np.asarray(points, dtype=float)
    k = f.source_dim
    dirs = _unit_directions(k, n_dirs)
    fx = f.evaluate(x)
    first = np.zeros(len(x))
    second = np.zeros(len(x))
    least = np.full(len(x), np.inf)
    for u in dirs:
        v = hb.from_frame(x, np.broadcast_to(u, (len(x), k)))
        fp = f.evaluate(hb.expmap(x, h * v))
        fm = f.evaluate(hb.expmap(x, -h * v))
        lp = hb.logmap(fx, fp)
        lm = hb.logmap(fx, fm)
        stretch = hb.tnorm(fx, lp - lm) / (2 * h)
        first = np.maximum(first, stretch)
        least = np.minimum(least, stretch)
        second = np.maximum(second, hb.tnorm(fx, lp + lm) / (h * h))
    return DerivativeCertificate(float(first.max()), float(second.max()), len(x), h, float(least.min()))


@dataclass(frozen=True)
class Certification:
    distortion: DistortionEstimate
    derivatives: DerivativeCertificate
    c: float

    def as_dict(self):
        return {"c": self.c, "c_lower": self.distortion.c_lower, "additive": self.distortion.A_lower,
                "distortion_samples": self.distortion.samples, "max_Df": self.derivatives.first,
                "max_D2f": self.derivatives.second, "derivative_samples": self.derivatives.samples,
                "fd_step": self.derivatives.step}


def certify(f: QuasiIsometricMap, seed=0, radius=5.0, n_pairs=4096, n_points=256) -> tuple[QuasiIsometricMap, Certification]:
    """Empirical constants for f; returns f carrying c = max(c_lower, ||Df||, ||D^2 f||, 1)."""
    est = estimate_qi_constant(f, PairSampler(seed, f.source_dim, radius), n_pairs)
    rng = np.random.default_rng(np.random.SeedSequence([seed, 7]))
    pts = hb.sample_points(rng, n_points, f.source_dim, radius)
    der = certify_derivatives(f, pts)
    c = max(est.c_lower, der.first, der.second, 1.0)
    return f.with_constants(c=c, additive=est.A_lower), Certification(est, der, c)


# --- spec round trip ------------------------------------------------------

GENERATORS = ("identity", "isometry", "perturbed_isometry", "shear")


def build_map(spec: dict) -> QuasiIsometricMap:
    """Rebuild a map from its serialized recipe (see ``QuasiIsometricMap.spec``)."""
    gen = spec.get("generator")
    if gen == "identity":
        f = make_isometry(int(spec.get("dim", 2)))
    elif gen == "isometry":
        f = make_isometry(int(spec.get("dim", 2)), spec.get("translation", 0.0), spec.get("angles", ()))
    elif gen == "perturbed_isometry":
        base = build_map(spec.get("base", {"generator": "identity"}))
        f = make_perturbed_isometry(base, float(spec["amplitude"]), float(spec["omega"]), spec.get("phases"))
    elif gen == "shear":
        f = make_horocyclic_shear(float(spec["lam"]))
    elif gen == "smoothed":
        inner = build_map(spec["inner"])
        bump = profile_by_name(spec.get("profile", "standard"), inner.source_dim)
        quadr = PolarQuadrature(int(spec.get("n_radial", 16)), int(spec.get("n_angular", 32)))
        f = smooth(inner, bump, quadr)
    else:
        raise ConfigError(f"unknown map generator {gen!r}; known: {list(GENERATORS) + ['smoothed']}")
    if "target_dim" in spec and int(spec["target_dim"]) != f.target_dim:
        f = compose_with_embedding(f, int(spec["target_dim"]))
    return f
