"""Point/vector types for H^k and the single-point geometry operations.

All heavy lifting is in :mod:`qiharmonic.geometry.hyperboloid`; this module
adds validation, the curvature scale, and the small value types used by the
rest of the package.  A space with ``curvature_scale = s`` has sectional
curvature ``-1/s**2``: coordinates stay on the unit hyperboloid and lengths
are multiplied by ``s``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import GeometryError
from . import hyperboloid as hb

SHEET_TOL = 1e-12
TANGENT_TOL = 1e-10


@dataclass(frozen=True)
class HPoint:
    coords: np.ndarray
    curvature_scale: float = 1.0

    def __post_init__(self):
        x = np.asarray(self.coords, dtype=float)
        if x.ndim != 1 or x.size < 3:
            raise GeometryError(f"HPoint needs a 1-d array of length >= 3, got shape {x.shape}")
        if not np.all(np.isfinite(x)):
            raise GeometryError("HPoint coordinates must be finite")
        if self.curvature_scale <= 0:
            raise GeometryError("curvature_scale must be positive")
        if x[0] < 0:
            raise GeometryError("point lies on the lower sheet")
        # relative test: <x,x> carries rounding of order eps * x0^2
        drift = abs(hb.mdot(x, x) + 1.0)
        if drift > SHEET_TOL * max(1.0, x[0] ** 2):
            x = hb.project(x)
        x = x.copy()
        x.setflags(write=False)
        object.__setattr__(self, "coords", x)

    @property
    def dim(self):
        return self.coords.size - 1

    @classmethod
    def origin(cls, dim, curvature_scale=1.0):
        return cls(hb.origin(dim), curvature_scale)

    @classmethod
    def from_spatial(cls, spatial, curvature_scale=1.0):
        s = np.asarray(spatial, dtype=float)
        return cls(hb.project(np.concatenate([[0.0], s])), curvature_scale)

    def __eq__(self, other):
        if not isinstance(other, HPoint):
            return NotImplemented
        return self.curvature_scale == other.curvature_scale and np.array_equal(self.coords, other.coords)

    def __hash__(self):
        return hash((self.coords.tobytes(), self.curvature_scale))

    def __repr__(self):
        return f"HPoint({np.array2string(self.coords, precision=6)})"


@dataclass(frozen=True)
class TangentVector:
    """Tangent vector at ``base``; components are in length units."""

    base: HPoint
    components: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.components, dtype=float)
        if v.shape != self.base.coords.shape:
            raise GeometryError(
                f"tangent components {v.shape} do not match base point {self.base.coords.shape}"
            )
        v = hb.tangentize(self.base.coords, v)
        v.setflags(write=False)
        object.__setattr__(self, "components", v)

    @property
    def norm(self):
        return float(hb.tnorm(self.base.coords, self.components))

    def __mul__(self, scalar):
        return TangentVector(self.base, float(scalar) * self.components)

    __rmul__ = __mul__

    def __neg__(self):
        return TangentVector(self.base, -self.components)

    def __add__(self, other):
        _same_base(self, other)
        return TangentVector(self.base, self.components + other.components)

    def __sub__(self, other):
        _same_base(self, other)
        return TangentVector(self.base, self.components - other.components)

    def inner(self, other):
        _same_base(self, other)
        return float(hb.tinner(self.base.coords, self.components, other.components))

    def unit(self):
        n = self.norm
        if n == 0.0:
            raise GeometryError("cannot normalize the zero vector")
        return TangentVector(self.base, self.components / n)


@dataclass(frozen=True)
class CurvaturePinching:
    """Curvature bounds ``-b**2 <= K <= -a**2``."""

    a: float = 1.0
    b: float = 1.0

    def __post_init__(self):
        if not (0.0 < self.a <= self.b):
            raise GeometryError(f"need 0 < a <= b, got a={self.a}, b={self.b}")


def _same_space(*points):
    dims = {p.dim for p in points}
    if len(dims) != 1:
        raise GeometryError(f"points live in different dimensions: {sorted(dims)}")
    scales = {p.curvature_scale for p in points}
    if len(scales) != 1:
        raise GeometryError("points live on hyperboloids of different curvature")


def _same_base(u, v):
    if u.base != v.base:
        raise GeometryError("tangent vectors have different base points")


def dist(p: HPoint, q: HPoint) -> float:
    _same_space(p, q)
    return p.curvature_scale * float(hb.distance(p.coords, q.coords))


def exp(p: HPoint, v: TangentVector) -> HPoint:
    _same_space(p, v.base)
    if v.base != p:
        raise GeometryError("tangent vector is not based at p")
    s = p.curvature_scale
    return HPoint(hb.expmap(p.coords, v.components / s), s)


def log(p: HPoint, q: HPoint) -> TangentVector:
    _same_space(p, q)
    return TangentVector(p, p.curvature_scale * hb.logmap(p.coords, q.coords))


def geodesic_point(p: HPoint, q: HPoint, t: float) -> HPoint:
    _same_space(p, q)
    if not 0.0 <= t <= 1.0:
        raise GeometryError(f"geodesic parameter must lie in [0, 1], got {t}")
    if t == 0.0:
        return p
    if t == 1.0:
        return q
    return HPoint(hb.geodesic(p.coords, q.coords, t), p.curvature_scale)


def parallel_transport(p: HPoint, q: HPoint, v: TangentVector) -> TangentVector:
    _same_space(p, q)
    if v.base != p:
        raise GeometryError("tangent vector is not based at p")
    if p == q:
        return v
    return TangentVector(q, hb.transport(p.coords, q.coords, v.components))


def angle(v1: TangentVector, v2: TangentVector) -> float:
    """Angle in [0, pi] between two nonzero vectors at the same point."""
    _same_base(v1, v2)
    p = v1.base.coords
    n1 = hb.tnorm(p, v1.components)
    n2 = hb.tnorm(p, v2.components)
    if n1 == 0.0 or n2 == 0.0:
        raise GeometryError("angle with the zero vector is undefined")
    u1 = v1.components / n1
    u2 = v2.components / n2
    # half-angle form keeps precision near 0 and pi
    return float(2.0 * np.arctan2(hb.tnorm(p, u1 - u2), hb.tnorm(p, u1 + u2)))


def gromov_product(x0: HPoint, x1: HPoint, x2: HPoint) -> float:
    """(x1|x2)_{x0} = (d(x0,x1) + d(x0,x2) - d(x1,x2)) / 2."""
    return 0.5 * (dist(x0, x1) + dist(x0, x2) - dist(x1, x2))


def karcher_mean(points, init: HPoint | None = None, tol: float = 1e-12, max_iter: int = 200) -> HPoint:
    """Weighted center of mass of ``[(HPoint, weight), ...]``.

    Raises :class:`~qiharmonic.errors.KarcherDivergence` if the gradient
    residual does not drop below ``tol`` (in length units per unit weight).
    """
    pts = [p for p, _ in points]
    if not pts:
        raise GeometryError("karcher_mean needs at least one point")
    _same_space(*pts)
    s = pts[0].curvature_scale
    arr = np.stack([p.coords for p in pts])
    w = np.array([float(wt) for _, wt in points])
    y0 = None if init is None else init.coords
    y, _ = hb.karcher(arr, w, init=y0, tol=tol / s, max_iter=max_iter)
    return HPoint(y, s)


def embed_totally_geodesic(p: HPoint, m: int) -> HPoint:
    """Image of ``p`` under the standard isometric embedding H^k -> H^m."""
    if m < p.dim:
        raise GeometryError(f"cannot embed H^{p.dim} into H^{m}")
    return HPoint(embed_coords(p.coords, m), p.curvature_scale)


def embed_coords(x, m):
    """Array version of :func:`embed_totally_geodesic` (pads with zeros)."""
    x = np.asarray(x, dtype=float)
    pad = m + 1 - x.shape[-1]
    if pad < 0:
        raise GeometryError(f"cannot embed H^{x.shape[-1] - 1} into H^{m}")
    if pad == 0:
        return x
    widths = [(0, 0)] * (x.ndim - 1) + [(0, pad)]
    return np.pad(x, widths)
