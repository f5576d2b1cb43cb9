"""Checks of the quantitative estimates on solved discrete harmonic maps.

Every continuous inequality is evaluated on mesh vertices or sphere samples
and reported as a :class:`CheckField` (one value per vertex or sample) whose
worst entry becomes a :class:`~qiharmonic.comparison.BoundCheck`.  Slack is
split into an analytic part, a mesh part calibrated on the isometry case and a
sampling part.

The sphere-window machinery works on maps seen in geodesic polar coordinates
``(rho, v)`` around ``y_R``.  Solved maps are converted with the log map;
synthetic oracle fields are given in polar form directly, which keeps them
meaningful at the large radii (rho_R >= 32 c^2) where the window exists.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .comparison import BoundCheck
from .errors import GeometryError, NotApplicable
from .geometry import HPoint
from .geometry import hyperboloid as hb
from .mesh import BallMesh, build_polar_mesh, discrete_laplacian
from .qimaps import QuasiIsometricMap, make_isometry
from .solver import BoundaryData, DiscreteMap, Interpolator, interpolate, solve_dirichlet

GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0
ISO_SAFETY = 4.0
UNDEFINED_RADIUS = 1e-9


# --- per-sample checks ----------------------------------------------------

@dataclass(frozen=True)
class CheckField:
    """Inequality ``measured <= bound`` (or ``>=``) evaluated at many places.

    ``tol_mesh`` may be a scalar or an array matching ``measured``.
    ``where`` records the vertex or sample index of each entry.
    """

    context: str
    measured: np.ndarray
    bound: np.ndarray
    sense: str = "<="
    tol_analytic: float = 0.0
    tol_mesh: float | np.ndarray = 0.0
    tol_sampling: float = 0.0
    where: np.ndarray | None = None

    def __post_init__(self):
        m = np.atleast_1d(np.asarray(self.measured, dtype=float))
        b = np.broadcast_to(np.asarray(self.bound, dtype=float), m.shape)
        object.__setattr__(self, "measured", m)
        object.__setattr__(self, "bound", np.array(b))
        if self.where is None:
            object.__setattr__(self, "where", np.arange(len(m)))

    @property
    def n(self):
        return len(self.measured)

    @property
    def margins(self):
        return self.measured - self.bound if self.sense == ">=" else self.bound - self.measured

    @property
    def tolerance(self):
        return self.tol_analytic + np.broadcast_to(self.tol_mesh, self.measured.shape) + self.tol_sampling

    @property
    def passed_mask(self):
        return self.margins >= -self.tolerance

    @property
    def passed(self):
        return bool(np.all(self.passed_mask))

    @property
    def violations(self):
        return int(np.sum(~self.passed_mask))

    def worst(self) -> BoundCheck:
        """The entry with the smallest margin relative to its tolerance."""
        if self.n == 0:
            raise NotApplicable(f"{self.context}: no samples")
        i = int(np.argmin(self.margins + self.tolerance))
        tm = float(np.broadcast_to(self.tol_mesh, self.measured.shape)[i])
        return BoundCheck(float(self.measured[i]), float(self.bound[i]), f"{self.context} [at {int(self.where[i])}]",
                          self.tol_analytic, tm, self.tol_sampling, self.n, self.sense)


# --- solving ---------------------------------------------------------------------

def map_on_mesh(f: QuasiIsometricMap, mesh: BallMesh):
    """f at every vertex (evaluated once; smoothed maps are expensive)."""
    return hb.project(f.evaluate(mesh.vertices))


def solve_map(f: QuasiIsometricMap, mesh: BallMesh, fv=None, **solve_kwargs):
    """Dirichlet solve with boundary data f, started from f; returns (hmap, report, f values)."""
    fv = map_on_mesh(f, mesh) if fv is None else fv
    idx = mesh.boundary_indices
    hmap, rep = solve_dirichlet(mesh, BoundaryData(idx, fv[idx]), initial=fv, **solve_kwargs)
    return hmap, rep, fv


# --- mesh calibration ---------------------------------------------------------

@dataclass(frozen=True)
class MeshCalibration:
    """Discretization slack for one mesh.

    ``iso_error`` is the sup distance between the discrete harmonic map with
    isometric boundary data and the isometry itself; ``eps_mesh`` multiplies
    it by ``safety``.  ``eps_lap`` bounds the error of discrete Laplacians of
    distance functions and is taken as ``h_mesh``; ``lap_deficit`` is the
    measured worst deficit of the identity case, kept for the record.
    """

    R: float
    h_mesh: float
    iso_error: float
    eps_mesh: float
    eps_lap: float
    lap_deficit: float
    safety: float = ISO_SAFETY

    def as_dict(self):
        return {"R": self.R, "h_mesh": self.h_mesh, "iso_error": self.iso_error, "eps_mesh": self.eps_mesh,
                "eps_lap": self.eps_lap, "lap_deficit": self.lap_deficit, "safety": self.safety}


def calibrate_mesh(mesh: BallMesh, safety=ISO_SAFETY, n_y0=5, seed=0) -> MeshCalibration:
    hmap, _, _ = solve_map(make_isometry(2), mesh)
    iso = float(np.max(hb.distance(hmap.values, mesh.vertices)))
    rng = np.random.default_rng(seed)
    deficit = 0.0
    inner = ~mesh.boundary
    for y0 in hb.sample_points(rng, n_y0, 2, mesh.R + 2.0, center=mesh.O.coords):
        d = hb.distance(mesh.vertices, np.broadcast_to(y0, mesh.vertices.shape))
        keep = inner & (d > 2 * mesh.h_mesh)
        # continuous Laplacian of d_{y0} is coth(d)
        lap = discrete_laplacian(mesh, d)[keep]
        deficit = max(deficit, float(np.max(1.0 / np.tanh(d[keep]) - lap, initial=0.0)))
    return MeshCalibration(mesh.R, mesh.h_mesh, iso, safety * iso, mesh.h_mesh, deficit, safety)


# --- sup distance ---------------------------------------------------------------

@dataclass(frozen=True)
class SupDistanceRecord:
    """rho_R = max_v d(h(v), f(v)) attained at vertex ``index`` (smallest index on ties)."""

    rho: float
    index: int
    x_R: np.ndarray
    y_R: np.ndarray
    h_x: np.ndarray
    v_R: np.ndarray
    R: float

    def as_dict(self):
        return {"rho_R": self.rho, "vertex": self.index, "x_R": self.x_R.tolist(), "y_R": self.y_R.tolist(),
                "v_R": self.v_R.tolist(), "R": self.R}


def polar_decomposition(y, points):
    """Geodesic polar coordinates around ``y``: radii, unit directions (frame coordinates), defined mask."""
    points = np.asarray(points, dtype=float)
    base = np.broadcast_to(y, points.shape)
    c = hb.to_frame(base, hb.logmap(base, points))
    rho = np.linalg.norm(c, axis=-1)
    defined = rho >= UNDEFINED_RADIUS
    v = np.where(defined[..., None], c / np.where(defined, rho, 1.0)[..., None], 0.0)
    return rho, v, defined


def polar_point(y, rho, v):
    """Inverse of :func:`polar_decomposition`."""
    rho = np.asarray(rho, dtype=float)
    base = np.broadcast_to(y, np.shape(v)[:-1] + (np.shape(y)[-1],))
    return hb.expmap(base, hb.from_frame(base, rho[..., None] * v))


def sup_distance(hmap: DiscreteMap, f_values) -> SupDistanceRecord:
    mesh = hmap.mesh
    fv = np.asarray(f_values, dtype=float)
    d = hb.distance(hmap.values, fv)
    i = int(np.argmax(d))
    rho = float(d[i])
    _, v, defined = polar_decomposition(fv[i], hmap.values[i])
    v_R = v if defined else np.zeros_like(v)
    return SupDistanceRecord(rho, i, mesh.vertices[i].copy(), fv[i].copy(), hmap.values[i].copy(), v_R, mesh.R)


# --- vertex checks ----------------------------------------------------------------

def vertex_dh_norms(hmap: DiscreteMap):
    """Discrete ||Dh|| at each vertex: max over incident edges of d(h_p, h_q) / d(p, q)."""
    mesh = hmap.mesh
    i, j = mesh.edges[:, 0], mesh.edges[:, 1]
    ratio = hb.distance(hmap.values[i], hmap.values[j]) / mesh.edge_lengths()
    out = np.zeros(mesh.n_vertices)
    np.maximum.at(out, i, ratio)
    np.maximum.at(out, j, ratio)
    return out


def check_boundary_estimate(hmap: DiscreteMap, f_values, c, a=1.0, k=2, eps_mesh=0.0) -> CheckField:
    """d(h(v), f(v)) <= (4 k c^2 / a) d(v, boundary) at every vertex."""
    mesh = hmap.mesh
    measured = hb.distance(hmap.values, np.asarray(f_values, dtype=float))
    bound = 4.0 * k * c * c / a * mesh.distance_to_boundary()
    return CheckField(f"boundary estimate (c={c:.4g}, a={a})", measured, bound, tol_mesh=eps_mesh,
                      tol_analytic=1e-12)


def check_subharmonicity(hmap: DiscreteMap, y0, eps_lap) -> CheckField:
    """Discrete Laplacian of v -> d(y0, h(v)) is >= 0 at interior vertices (up to eps_lap)."""
    mesh = hmap.mesh
    y0 = y0.coords if isinstance(y0, HPoint) else np.asarray(y0, dtype=float)
    u = hb.distance(hmap.values, np.broadcast_to(y0, hmap.values.shape))
    inner = mesh.interior
    lap = discrete_laplacian(mesh, u)[inner]
    return CheckField("subharmonicity of d(y0, h)", lap, 0.0, ">=", tol_mesh=eps_lap, where=inner)


def enclosing_radius(points, iterations=100):
    """Radius of a ball containing all ``points`` (center by Badoiu-Clarkson steps).

    The radius is the exact max distance from the returned center, so it is a
    certified containing radius whatever the quality of the center.
    """
    pts = np.asarray(points, dtype=float)
    center = hb.minkowski_mean(pts, np.full(len(pts), 1.0 / len(pts)))
    for i in range(iterations):
        d = hb.distance(pts, np.broadcast_to(center, pts.shape))
        far = pts[int(np.argmax(d))]
        center = hb.geodesic(center, far, 1.0 / (i + 2))
    d = hb.distance(pts, np.broadcast_to(center, pts.shape))
    return float(d.max()), center


def cheng_bound(k, b, r0, R0):
    return 2.0 ** 5 * k * (1.0 + b * r0) / r0 * R0


def check_cheng(hmap: DiscreteMap, x0: int, r0=1.0, b=1.0, k=2, dh=None) -> BoundCheck:
    """||Dh(x0)|| <= 2^5 k (1 + b r0) / r0 * R0 with R0 the certified image radius of B(x0, r0)."""
    mesh = hmap.mesh
    x = mesh.vertices[x0]
    if hb.distance(x, mesh.O.coords) + r0 > mesh.R + 1e-12:
        raise NotApplicable(f"B(x0, {r0}) is not inside the meshed ball")
    d = hb.distance(mesh.vertices, np.broadcast_to(x, mesh.vertices.shape))
    # one extra mesh step covers every triangle meeting B(x0, r0)
    R0, _ = enclosing_radius(hmap.values[d <= r0 + 1.5 * mesh.h_mesh])
    dh = vertex_dh_norms(hmap) if dh is None else dh
    return BoundCheck(float(dh[x0]), cheng_bound(k, b, r0, R0), f"Cheng bound at vertex {x0} (r0={r0}, R0={R0:.4g})",
                      tol_analytic=1e-12)


def cheng_probes(mesh: BallMesh, r0=1.0, n=100):
    """``n`` vertices evenly spread over those whose r0-ball lies in the mesh."""
    ok = np.flatnonzero(mesh.radii() + r0 <= mesh.R + 1e-12)
    if len(ok) == 0:
        return ok
    pick = np.unique(np.linspace(0, len(ok) - 1, min(n, len(ok))).round().astype(int))
    return ok[pick]


# --- Gauss lemma check ----------------------------------------------------------------

def unit_angle(u, v):
    """Angle between unit vectors (last axis), stable near 0 and pi."""
    return 2.0 * np.arctan2(np.linalg.norm(u - v, axis=-1), np.linalg.norm(u + v, axis=-1))


def check_gauss_inequality(hmap: DiscreteMap, y_R, eps_rel) -> list[CheckField]:
    """Per edge: (1/a) sinh(a rho_h) ||Dv_h|| <= ||Dh|| for a = 1/2 and a = 1.

    ``a = 1/2`` is the form valid under the weaker curvature normalization
    (2 sinh(rho/2)); ``a = 1`` is sharp for curvature -1 and is an equality for
    rotations about ``y_R``.  Both derivatives are chord difference quotients
    along the edge: ``2 sin(theta/2)`` on the unit circle of directions and
    ``2 sinh(d/2)`` in the target, with ``sinh(rho_h) = sqrt(sinh rho_p sinh rho_q)``.
    The common edge length cancels.  The mesh tolerance is ``eps_rel * d``.
    """
    mesh = hmap.mesh
    rho, v, defined = polar_decomposition(y_R, hmap.values)
    i, j = mesh.edges[:, 0], mesh.edges[:, 1]
    ok = defined[i] & defined[j]
    i, j = i[ok], j[ok]
    dv = 2.0 * np.sin(0.5 * unit_angle(v[i], v[j]))
    rho_e = np.arcsinh(np.sqrt(np.sinh(rho[i]) * np.sinh(rho[j])))
    d = hb.distance(hmap.values[i], hmap.values[j])
    dh = 2.0 * np.sinh(0.5 * d)
    out = []
    for a in (0.5, 1.0):
        lhs = np.sinh(a * rho_e) / a * dv
        out.append(CheckField(f"Gauss lemma pullback (a={a})", lhs, dh, tol_mesh=eps_rel * d,
                              tol_analytic=1e-12, where=np.flatnonzero(ok)))
    return out


# --- sphere window -----------------------------------------------------------------

def polar_distance(r1, v1, r2, v2):
    """Distance between points with polar coordinates (r1, v1), (r2, v2) about one center.

    ``2 sinh^2(d/2) = 2 sinh^2((r1-r2)/2) + 2 sinh r1 sinh r2 sin^2(theta/2)``,
    which stays accurate for large radii.
    """
    half = 0.5 * unit_angle(v1, v2)
    s = np.sinh(0.5 * (r1 - r2)) ** 2 + np.sinh(r1) * np.sinh(r2) * np.sin(half) ** 2
    return 2.0 * np.arcsinh(np.sqrt(s))


PolarMap = Callable[[np.ndarray], tuple]


@dataclass
class WindowInput:
    """Maps h and f seen from y_R, plus the domain ball and ray step.

    ``h_polar`` and ``f_polar`` take domain points ``(..., 3)`` and return
    ``(rho, v)`` with ``v`` unit vectors in frame coordinates at ``y_R``.
    ``dh_ball(center, r)`` returns ||Dh|| estimates on B(center, r).
    """

    h_polar: PolarMap
    f_polar: PolarMap
    O: np.ndarray
    R: float
    step: float
    dh_ball: Callable[[np.ndarray, float], np.ndarray] | None = None

    @classmethod
    def from_solution(cls, hmap: DiscreteMap, f: QuasiIsometricMap, record: SupDistanceRecord):
        interp = Interpolator(hmap)
        y_R = record.y_R
        dh = vertex_dh_norms(hmap)
        mesh = hmap.mesh

        def h_polar(x):
            rho, v, _ = polar_decomposition(y_R, interp(x.reshape(-1, 3)))
            return rho.reshape(x.shape[:-1]), v.reshape(x.shape[:-1] + v.shape[-1:])

        def f_polar(x):
            rho, v, _ = polar_decomposition(y_R, f.evaluate(x))
            return rho, v

        def dh_ball(center, r):
            d = hb.distance(mesh.vertices, np.broadcast_to(center, mesh.vertices.shape))
            return dh[d <= r]

        return cls(h_polar, f_polar, mesh.O.coords, mesh.R, mesh.h_mesh, dh_ball)

    def fd_dh_ball(self, center, r, n_radial=6, n_angular=24, n_dirs=8):
        """Finite-difference ||Dh|| on a polar grid of B(center, r) (used for synthetic fields)."""
        pts = [np.asarray(center, dtype=float)[None, :]]
        for t in np.linspace(r / n_radial, r, n_radial):
            pts.append(sphere_samples(center, t, n_angular))
        pts = np.concatenate(pts)
        s = 0.25 * self.step
        best = np.zeros(len(pts))
        for phi in np.pi * np.arange(n_dirs) / n_dirs:
            u = hb.from_frame(pts, np.broadcast_to([np.cos(phi), np.sin(phi)], (len(pts), 2)))
            rp, vp = self.h_polar(hb.expmap(pts, s * u))
            rm, vm = self.h_polar(hb.expmap(pts, -s * u))
            best = np.maximum(best, polar_distance(rp, vp, rm, vm) / (2 * s))
        return best


def sphere_samples(center, r, n):
    """``n`` points of S(center, r) in H^2 at golden-ratio angles (seed-free, low discrepancy)."""
    phi = 2.0 * np.pi * np.mod(np.arange(n) * GOLDEN, 1.0)
    return ray_points(center, phi, np.array([r]))[:, 0]


def ray_points(center, phi, t):
    """Points exp_center(t (cos phi, sin phi)), shape (len(phi), len(t), 3)."""
    center = np.asarray(center, dtype=float)
    c = np.stack([np.cos(phi), np.sin(phi)], axis=-1)
    base = np.broadcast_to(center, (len(phi), 3))
    dirs = hb.from_frame(base, c)
    v = t[None, :, None] * dirs[:, None, :]
    return hb.expmap(np.broadcast_to(center, v.shape), v)


@dataclass
class SphereSets:
    """Samples of S(x_R, r_R) with U/V/W membership (``in_W = in_U & in_V``)."""

    x_R: np.ndarray
    r_R: float
    rho_R: float
    c: float
    phi: np.ndarray
    points: np.ndarray
    rho_h: np.ndarray
    v_h: np.ndarray
    rho_f: np.ndarray
    v_f: np.ndarray
    ray_min: np.ndarray
    lipschitz: float
    step: float
    in_U: np.ndarray = field(init=False)
    in_V: np.ndarray = field(init=False)
    in_W: np.ndarray = field(init=False)

    def __post_init__(self):
        self.in_U = self.rho_h >= self.rho_R - self.r_R / (2.0 * self.c)
        self.in_V = self.ray_min >= self.rho_R / 2.0
        self.in_W = self.in_U & self.in_V

    @property
    def n(self):
        return len(self.points)

    @property
    def sigma_U(self):
        return float(np.mean(self.in_U))

    @property
    def sigma_V(self):
        return float(np.mean(self.in_V))

    @property
    def sigma_W(self):
        return float(np.mean(self.in_W))

    @property
    def sampling_error(self):
        return 2.0 / math.sqrt(self.n)

    @property
    def v_tolerance(self):
        """Lipschitz correction L * step for the discrete minimum along rays."""
        return self.lipschitz * self.step

    def as_dict(self):
        return {"r_R": self.r_R, "n": self.n, "sigma_U": self.sigma_U, "sigma_V": self.sigma_V,
                "sigma_W": self.sigma_W, "sampling_error": self.sampling_error,
                "lipschitz": self.lipschitz, "v_tolerance": self.v_tolerance}


def window_radius(rho, c, k=2):
    """r_R = rho^(1/3) clamped to [1, rho / (16 k c^2)]; NotApplicable if that interval is empty."""
    upper = rho / (16.0 * k * c * c)
    if upper < 1.0:
        raise NotApplicable(f"rho_R/(16 k c^2) = {upper:.4g} < 1: no admissible window radius")
    return float(min(max(rho ** (1.0 / 3.0), 1.0), upper))


def polar_window(inp: WindowInput, record: SupDistanceRecord, c, k=2, n=256) -> SphereSets:
    """Sample S(x_R, r_R) and classify the samples into U_R, V_R, W_R."""
    r = window_radius(record.rho, c, k)
    if hb.distance(record.x_R, inp.O) + r > inp.R - 1.0 + 1e-12:
        raise NotApplicable(f"B(x_R, {r:.4g}) does not fit in B(O, R - 1)")
    phi = 2.0 * np.pi * np.mod(np.arange(n) * GOLDEN, 1.0)
    steps = max(1, int(math.ceil(r / inp.step)))
    t = np.linspace(0.0, r, steps + 1)
    rays = ray_points(record.x_R, phi, t)
    rho_t, v_t = inp.h_polar(rays)
    rho_t = np.asarray(rho_t).reshape(n, len(t))
    v_t = np.asarray(v_t).reshape(n, len(t), -1)
    seg = polar_distance(rho_t[:, 1:], v_t[:, 1:], rho_t[:, :-1], v_t[:, :-1]) / np.diff(t)
    rho_f, v_f = inp.f_polar(rays[:, -1])
    return SphereSets(record.x_R, r, record.rho, c, phi, rays[:, -1], rho_t[:, -1], v_t[:, -1],
                      np.asarray(rho_f), np.asarray(v_f), rho_t.min(axis=1), float(seg.max()), float(t[1] - t[0]))


@dataclass
class WindowResult:
    checks: list
    not_applicable: list
    green_mean: float
    diameter: float


def angle_bound_iv_a(c, r, a):
    """Bound on angle(v_f, v_h) on U_R for curvature <= -a^2."""
    return 4.0 * math.exp(a * c / 2.0) * math.exp(-a * r / (4.0 * c))


def angle_bound_iv_b(rho, a):
    """Bound on angle(v_h, v_R) on V_R for curvature <= -a^2 (8 rho^2 / sinh(rho/4) when a = 1/2)."""
    return 4.0 * rho * rho / (a * math.sinh(a * rho / 2.0))


def check_window_lemmas(sets: SphereSets, inp: WindowInput, record: SupDistanceRecord, c, k=2,
                        eps_mesh=0.0) -> WindowResult:
    rho, r = record.rho, sets.r_R
    checks, na = [], []
    checks.append(CheckField("(i) rho_h <= rho_R + c r_R", sets.rho_h, rho + c * r, tol_mesh=eps_mesh,
                             tol_analytic=1e-9 * rho))
    if inp.dh_ball is not None:
        dh = inp.dh_ball(record.x_R, r)
    else:
        dh = inp.fd_dh_ball(record.x_R, r)
    checks.append(CheckField("(ii) ||Dh|| <= 2^8 k rho_R on B(x_R, r_R)", dh, 2.0 ** 8 * k * rho,
                             tol_mesh=eps_mesh))
    rhs = 1.0 / (3.0 * c * c) - 2.0 ** 12 * k * c * r * r / rho
    if rhs > 0:
        checks.append(CheckField("(iii) sigma(W_R) >= 1/(3c^2) - 2^12 k c r_R^2/rho_R", sets.sigma_W, rhs, ">=",
                                 tol_sampling=sets.sampling_error))
    else:
        na.append(("(iii) sigma(W_R) lower bound", f"right side {rhs:.4g} <= 0"))
    U, V = sets.in_U, sets.in_V
    for a in (0.5, 1.0):
        if U.any():
            theta = unit_angle(sets.v_f[U], sets.v_h[U])
            checks.append(CheckField(f"(iv) angle(v_f, v_h) on U_R (a={a})", theta, angle_bound_iv_a(c, r, a),
                                     tol_analytic=1e-9, where=np.flatnonzero(U)))
        else:
            na.append((f"(iv) angle(v_f, v_h) (a={a})", "U_R has no samples"))
        if V.any():
            theta = unit_angle(sets.v_h[V], np.broadcast_to(record.v_R, sets.v_h[V].shape))
            checks.append(CheckField(f"(iv) angle(v_h, v_R) on V_R (a={a})", theta, angle_bound_iv_b(rho, a),
                                     tol_analytic=1e-9, where=np.flatnonzero(V)))
        else:
            na.append((f"(iv) angle(v_h, v_R) (a={a})", "V_R has no samples"))
    diff = sets.rho_h - rho
    green = float(np.mean(diff))
    err = 2.0 * float(np.std(diff)) / math.sqrt(sets.n)
    checks.append(CheckField("mean of rho_h - rho_R over S(x_R, r_R) >= 0", green, 0.0, ">=",
                             tol_sampling=err, tol_mesh=eps_mesh))
    return WindowResult(checks, na, green, diameter_of_directions(sets))


def diameter_of_directions(sets: SphereSets) -> float:
    """Largest angle between two directions v_f(z), z in W_R (0 for fewer than two samples)."""
    v = sets.v_f[sets.in_W]
    if len(v) < 2:
        return 0.0
    return float(np.max(unit_angle(v[:, None, :], v[None, :, :])))


# --- convergence study -----------------------------------------------------------------

@dataclass
class StudyRow:
    R: float
    n_vertices: int
    rho_R: float
    x_R_radius: float
    sweeps: int
    converged: bool
    diff_prev: float | None


@dataclass
class ConvergenceStudy:
    rows: list
    S: float
    eps_mesh: float

    @property
    def rhos(self):
        return np.array([r.rho_R for r in self.rows])

    @property
    def diffs(self):
        return np.array([r.diff_prev for r in self.rows[1:]], dtype=float)

    @property
    def increments(self):
        return np.diff(self.rhos)

    @property
    def unbounded_growth(self):
        """Monotone growth beyond eps_mesh at every step with no deceleration."""
        inc = self.increments
        if len(inc) == 0 or not np.all(inc > self.eps_mesh):
            return False
        return bool(len(inc) < 2 or np.all(inc[1:] >= inc[:-1]))

    @property
    def diffs_decreasing(self):
        d = self.diffs
        return bool(np.all(np.diff(d) < 0)) if len(d) > 1 else True

    @property
    def extrapolated_rho(self):
        """Geometric extrapolation of rho_R when its increments shrink, else None."""
        inc = self.increments
        if len(inc) < 2 or inc[-1] <= 0 or inc[-2] <= 0:
            return float(self.rhos.max())
        q = inc[-1] / inc[-2]
        if q >= 1:
            return None
        return float(self.rhos[-1] + inc[-1] * q / (1 - q))

    def as_rows(self):
        return [{"R": r.R, "n_vertices": r.n_vertices, "rho_R": r.rho_R, "x_R_radius": r.x_R_radius,
                 "sweeps": r.sweeps, "converged": r.converged, "sup_diff_on_B_S": r.diff_prev} for r in self.rows]


def convergence_study(f: QuasiIsometricMap, radii, S=2.0, h_mesh=0.1, eps_mesh=0.0, O=None,
                      solve_kwargs=None, meshes=None) -> ConvergenceStudy:
    """Solve on B(O, R) for increasing R and compare consecutive solutions on B(O, S)."""
    radii = [float(R) for R in radii]
    if any(b <= a for a, b in zip(radii, radii[1:])):
        raise GeometryError("radii must be strictly increasing")
    if S > radii[0]:
        raise GeometryError("comparison radius S must not exceed the smallest R")
    O = HPoint.origin(2) if O is None else O
    rows, prev = [], None
    for idx, R in enumerate(radii):
        mesh = meshes[idx] if meshes is not None else build_polar_mesh(O, R, h_mesh)
        hmap, rep, fv = solve_map(f, mesh, **(solve_kwargs or {}))
        rec = sup_distance(hmap, fv)
        inside = mesh.radii() <= S + 1e-9
        diff = None
        if prev is not None:
            old = interpolate(prev.mesh, prev, mesh.vertices[inside])
            diff = float(np.max(hb.distance(old, hmap.values[inside])))
        rows.append(StudyRow(R, mesh.n_vertices, rec.rho, float(mesh.radii()[rec.index]), rep.sweeps,
                             rep.converged, diff))
        prev = hmap
    return ConvergenceStudy(rows, S, eps_mesh)
