"""Discrete harmonic maps from a ball mesh into H^m.

The discrete Dirichlet energy is ``E(h) = sum_edges w_pq d(h_p, h_q)^2``.
It is minimized over the interior values by nonlinear Gauss-Seidel: each
update moves one interior vertex to the w-weighted Karcher mean of its
neighbors' values, which is the exact minimizer of E in that variable.
Vertices are grouped by a greedy graph coloring so that vertices of one color
have disjoint neighborhoods and can be updated together.

Plain Gauss-Seidel needs on the order of (R/h)^2 sweeps.  With
``accelerate=True`` every sweep is preceded by a Newton correction for all
interior vertices at once (exact Hessian of the energy, whose transverse
terms d coth d matter on smooth modes), accepted only if it lowers the
energy, so the trace stays monotone and the fixed point is unchanged.
"""

from __future__ import annotations

import csv
import io
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .errors import GeometryError
from .geometry import HPoint
from .geometry import hyperboloid as hb
from .mesh import BallMesh, Locator, _atomic_write
from .qimaps import QuasiIsometricMap

ENERGY_SLACK = 1e-12
MAX_CORRECTIONS = 60
BACKTRACK_STEPS = 12


@dataclass(frozen=True)
class BoundaryData:
    """Prescribed values ``values[i]`` at the boundary vertices ``indices[i]``."""

    indices: np.ndarray
    values: np.ndarray

    @property
    def target_dim(self):
        return self.values.shape[-1] - 1


@dataclass
class DiscreteMap:
    """Vertex values of a map on ``mesh``; ``values`` has shape ``(N, m+1)``."""

    mesh: BallMesh
    values: np.ndarray

    @property
    def target_dim(self):
        return self.values.shape[-1] - 1

    def point(self, i) -> HPoint:
        return HPoint(self.values[i])

    def boundary_error(self, data: BoundaryData):
        """Largest distance between the stored and prescribed boundary values."""
        if len(data.indices) == 0:
            return 0.0
        return float(np.max(hb.distance(self.values[data.indices], data.values)))

    def copy(self):
        return DiscreteMap(self.mesh, self.values.copy())


@dataclass
class SolveReport:
    sweeps: int
    displacement: float
    energy_trace: list
    converged: bool
    corrections: int = 0
    residual: float = float("nan")
    tol: float = 0.0
    colors: int = 0
    events: list = field(default_factory=list)

    def energy_monotone(self, slack=ENERGY_SLACK):
        e = np.asarray(self.energy_trace)
        return bool(np.all(np.diff(e) <= slack * np.maximum(1.0, np.abs(e[:-1]))))

    def as_dict(self):
        return {
            "sweeps": self.sweeps,
            "corrections": self.corrections,
            "displacement": self.displacement,
            "converged": self.converged,
            "residual": self.residual,
            "tol": self.tol,
            "colors": self.colors,
            "energy_initial": self.energy_trace[0],
            "energy_final": self.energy_trace[-1],
            "energy_monotone": self.energy_monotone(),
        }


def restrict_boundary(f: QuasiIsometricMap, mesh: BallMesh) -> BoundaryData:
    """Boundary data ``f(v)`` at every boundary vertex."""
    if f.source_dim != 2:
        raise GeometryError("boundary data needs a map defined on H^2")
    idx = mesh.boundary_indices
    return BoundaryData(idx, hb.project(f.evaluate(mesh.vertices[idx])))


def discrete_energy(mesh: BallMesh, hmap) -> float:
    """``sum_edges w_pq d(h_p, h_q)^2``."""
    values = hmap.values if isinstance(hmap, DiscreteMap) else np.asarray(hmap)
    d = hb.distance(values[mesh.edges[:, 0]], values[mesh.edges[:, 1]])
    return float(np.sum(mesh.weights * d * d))


# --- graph helpers -------------------------------------------------------

def adjacency(mesh: BallMesh):
    """CSR adjacency ``(indptr, indices, weights)`` with neighbors sorted by index."""
    W = mesh.weight_matrix()
    # keep zero-weight edges: they are still neighbors for the coloring
    n = mesh.n_vertices
    i, j = mesh.edges[:, 0], mesh.edges[:, 1]
    A = sp.coo_matrix((np.ones(2 * len(i)), (np.concatenate([i, j]), np.concatenate([j, i]))), shape=(n, n)).tocsr()
    A.sort_indices()
    rows = np.repeat(np.arange(n), np.diff(A.indptr))
    w = np.asarray(W[rows, A.indices]).ravel()
    return A.indptr, A.indices, w


def greedy_coloring(indptr, indices, vertices):
    """Smallest-available-color greedy coloring, visiting ``vertices`` in order."""
    n = len(indptr) - 1
    color = np.full(n, -1, dtype=np.int64)
    ptr = indptr.tolist()
    nbr = indices.tolist()
    col = color.tolist()
    for v in vertices.tolist():
        used = {col[u] for u in nbr[ptr[v]:ptr[v + 1]]}
        c = 0
        while c in used:
            c += 1
        col[v] = c
    return np.array(col, dtype=np.int64)


def _padded_neighbors(indptr, indices, weights, verts):
    deg = indptr[verts + 1] - indptr[verts]
    width = int(deg.max()) if len(verts) else 0
    cols = np.arange(width)
    mask = cols[None, :] < deg[:, None]
    pos = np.where(mask, indptr[verts][:, None] + cols[None, :], 0)
    nb = np.where(mask, indices[pos], verts[:, None])
    w = np.where(mask, weights[pos], 0.0)
    return nb, w


@dataclass
class _Schedule:
    groups: list
    n_colors: int


def _schedule(mesh, indptr, indices, weights, order):
    interior = mesh.interior
    visit = interior if order == "forward" else interior[::-1]
    colors = greedy_coloring(indptr, indices, visit)
    ncol = int(colors[interior].max()) + 1 if len(interior) else 0
    color_seq = range(ncol) if order == "forward" else range(ncol - 1, -1, -1)
    groups = []
    for c in color_seq:
        verts = interior[colors[interior] == c]
        if order != "forward":
            verts = verts[::-1]
        nb, w = _padded_neighbors(indptr, indices, weights, verts)
        active = w.sum(axis=1) > 0
        groups.append((verts[active], nb[active], w[active]))
    return _Schedule(groups, ncol)


def _gs_sweep(values, schedule, local_tol, pool, chunk):
    moved = 0.0
    for verts, nb, w in schedule.groups:
        if len(verts) == 0:
            continue
        cur = values[verts]
        pts = values[nb]

        def work(s):
            y, _ = hb.karcher(pts[s], w[s], init=cur[s], tol=local_tol, max_iter=100, strict=False)
            return y

        slices = [slice(a, a + chunk) for a in range(0, len(verts), chunk)]
        parts = list(pool.map(work, slices)) if pool is not None else [work(s) for s in slices]
        new = np.concatenate(parts)
        moved = max(moved, float(np.max(hb.distance(cur, new))))
        values[verts] = new
    return moved


# --- Newton correction -----------------------------------------------

def _tension(values, mesh):
    """Per-vertex ``sum_q w_pq log_{h_p} h_q`` in frame coordinates, and per-edge logs."""
    i, j = mesh.edges[:, 0], mesh.edges[:, 1]
    yi, yj = values[i], values[j]
    lij = hb.logmap(yi, yj)
    lji = hb.logmap(yj, yi)
    n = values.shape[1] - 1
    g = np.zeros((len(values), n))
    w = mesh.weights[:, None]
    np.add.at(g, i, w * hb.to_frame(yi, lij))
    np.add.at(g, j, w * hb.to_frame(yj, lji))
    return g, lij, lji


def tension_residual(mesh: BallMesh, hmap) -> float:
    """Max over interior vertices of ``|sum_q w_pq log_{h_p} h_q| / sum_q w_pq``."""
    values = hmap.values if isinstance(hmap, DiscreteMap) else np.asarray(hmap)
    g, _, _ = _tension(values, mesh)
    wsum = np.bincount(mesh.edges.ravel(), weights=np.repeat(mesh.weights, 2), minlength=mesh.n_vertices)
    inner = mesh.interior
    if len(inner) == 0:
        return 0.0
    return float(np.max(np.linalg.norm(g[inner], axis=1) / np.maximum(wsum[inner], 1e-300)))


def _transport_blocks(ya, yb):
    """Matrices taking frame(yb) coordinates to frame(ya) coordinates after transport yb -> ya."""
    E = hb.frame(yb)
    moved = hb.transport(yb[:, None, :], ya[:, None, :], E)
    return np.swapaxes(hb.to_frame(ya[:, None, :], moved), 1, 2)


def _edge_hessian_blocks(yi, yj):
    """Blocks of the Hessian of d(x, y)^2 / 2 at (x, y) = (yi, yj), in frame coordinates.

    With u the unit direction of log_x y: the (x, x) block is
    ``u u^T + d coth(d) (I - u u^T)`` and the (x, y) block is
    ``-(u u^T + d / sinh(d) (I - u u^T)) P`` with P the transport from y to x.
    """
    n = yi.shape[-1] - 1
    lij = hb.to_frame(yi, hb.logmap(yi, yj))
    lji = hb.to_frame(yj, hb.logmap(yj, yi))
    d = np.linalg.norm(lij, axis=-1)
    safe = np.where(d > 0.0, d, 1.0)
    ui = np.where((d > 0.0)[:, None], lij / safe[:, None], 0.0)
    uj = np.where((d > 0.0)[:, None], lji / safe[:, None], 0.0)
    small = d < 1e-4
    coth = np.where(small, 1.0 + d * d / 3.0, safe / np.tanh(safe))
    csch = np.where(small, 1.0 - d * d / 6.0, safe / np.sinh(safe))
    eye = np.eye(n)
    Ui = ui[:, :, None] * ui[:, None, :]
    Uj = uj[:, :, None] * uj[:, None, :]
    Hii = Ui + coth[:, None, None] * (eye - Ui)
    Hjj = Uj + coth[:, None, None] * (eye - Uj)
    P = _transport_blocks(yi, yj)
    Hij = -(Ui + csch[:, None, None] * (eye - Ui)) @ P
    return Hii, Hjj, Hij


def _newton_matrix(values, mesh):
    """Hessian of E/2 in the interior unknowns (frame coordinates); positive definite."""
    n = values.shape[1] - 1
    inner = mesh.interior
    pos = np.full(mesh.n_vertices, -1)
    pos[inner] = np.arange(len(inner))
    i, j = mesh.edges[:, 0], mesh.edges[:, 1]
    w = mesh.weights
    keep = (w > 0) & ((pos[i] >= 0) | (pos[j] >= 0))
    i, j, w = i[keep], j[keep], w[keep]
    Hii, Hjj, Hij = _edge_hessian_blocks(values[i], values[j])
    ar = np.arange(n)
    rows, cols, data = [], [], []

    def add(pa, pb, block):
        ok = (pa >= 0) & (pb >= 0)
        r = np.broadcast_to(pa[ok][:, None, None] * n + ar[None, :, None], block[ok].shape)
        c = np.broadcast_to(pb[ok][:, None, None] * n + ar[None, None, :], block[ok].shape)
        rows.append(r.ravel())
        cols.append(c.ravel())
        data.append((w[ok][:, None, None] * block[ok]).ravel())

    pi, pj = pos[i], pos[j]
    add(pi, pi, Hii)
    add(pj, pj, Hjj)
    add(pi, pj, Hij)
    add(pj, pi, np.swapaxes(Hij, 1, 2))
    size = len(inner) * n
    return sp.coo_matrix((np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))), shape=(size, size)).tocsc()


def _newton_direction(values, mesh, g):
    A = _newton_matrix(values, mesh)
    inner = mesh.interior
    xi = splu(A).solve(g[inner].ravel())
    return xi.reshape(len(inner), values.shape[1] - 1)


def _newton_correction(values, mesh, energy):
    """One backtracked Newton step; returns (values, energy, accepted)."""
    g, _, _ = _tension(values, mesh)
    inner = mesh.interior
    xi = _newton_direction(values, mesh, g)
    base = values[inner]
    step = hb.from_frame(base, xi)
    t = 1.0
    for _ in range(BACKTRACK_STEPS):
        trial = values.copy()
        trial[inner] = hb.expmap(base, t * step)
        e = discrete_energy(mesh, trial)
        if e < energy:
            return trial, e, True
        t *= 0.5
    return values, energy, False


# --- initial guesses -------------------------------------------------------

def solve_scalar_dirichlet(mesh: BallMesh, boundary_values) -> np.ndarray:
    """Discrete harmonic extension of real boundary values (one column per field).

    Solves ``sum_q w_pq (u_q - u_p) = 0`` at interior vertices; with nonnegative
    weights the result obeys the maximum principle.
    """
    bvals = np.asarray(boundary_values, dtype=float)
    squeeze = bvals.ndim == 1
    bvals = bvals.reshape(len(bvals), -1)
    L = mesh.laplacian_matrix()
    inner = mesh.interior
    bidx = mesh.boundary_indices
    lu = splu(L[inner][:, inner].tocsc())
    rhs = -(L[inner][:, bidx] @ bvals)
    out = np.empty((mesh.n_vertices, bvals.shape[1]))
    out[bidx] = bvals
    out[inner] = np.column_stack([lu.solve(rhs[:, c]) for c in range(bvals.shape[1])])
    return out[:, 0] if squeeze else out


def harmonic_extension(mesh: BallMesh, data: BoundaryData) -> np.ndarray:
    """Scalar-harmonic extension of each Minkowski coordinate, projected to the hyperboloid."""
    order = np.argsort(data.indices)
    if not np.array_equal(data.indices[order], mesh.boundary_indices):
        raise GeometryError("boundary data must cover exactly the boundary vertices")
    out = solve_scalar_dirichlet(mesh, data.values[order])
    inner = mesh.interior
    out[inner] = hb.minkowski_mean(out[inner][:, None, :], np.ones((len(inner), 1)))
    out[data.indices] = data.values
    return out


def initial_values(mesh, data, f=None, init="data"):
    if init == "data":
        if f is None:
            raise GeometryError("init='data' needs the map f")
        values = hb.project(f.evaluate(mesh.vertices))
    elif init == "harmonic":
        values = harmonic_extension(mesh, data)
    elif init == "constant":
        values = np.broadcast_to(data.values[0], (mesh.n_vertices, data.values.shape[1])).copy()
    else:
        raise GeometryError(f"unknown initial guess {init!r}")
    values[data.indices] = data.values
    return values


def solve_dirichlet(mesh: BallMesh, data: BoundaryData, tol=None, max_sweeps=None, *, f=None,
                    init="data", initial=None, accelerate=True, order="forward", threads=1,
                    chunk=4096) -> tuple[DiscreteMap, SolveReport]:
    """Minimize the discrete Dirichlet energy with the given boundary values.

    Converged means a full Gauss-Seidel sweep moved no vertex by more than
    ``tol``.  ``order`` ("forward" or "reverse") fixes the vertex and color
    order of the sweeps.  ``initial`` overrides ``init`` with explicit
    values.  Running out of sweeps is reported, not raised.
    """
    if len(data.indices) != mesh.boundary.sum() or not np.all(mesh.boundary[data.indices]):
        raise GeometryError("boundary data must cover exactly the boundary vertices")
    if order not in ("forward", "reverse"):
        raise GeometryError(f"order must be 'forward' or 'reverse', got {order!r}")
    tol = 1e-6 * mesh.h_mesh if tol is None else float(tol)
    max_sweeps = int(10 * (mesh.R / mesh.h_mesh) ** 2) if max_sweeps is None else int(max_sweeps)
    if initial is not None:
        values = np.array(initial, dtype=float)
        values[data.indices] = data.values
    else:
        values = initial_values(mesh, data, f, init)
    indptr, indices, weights = adjacency(mesh)
    schedule = _schedule(mesh, indptr, indices, weights, order)
    local_tol = min(1e-12, 1e-3 * tol)
    energy = discrete_energy(mesh, values)
    trace = [energy]
    events = []
    corrections = 0
    displacement = float("inf")
    sweeps = 0
    converged = False
    use_newton = accelerate and len(mesh.interior) > 0
    pool = ThreadPoolExecutor(threads) if threads > 1 else None
    try:
        while sweeps < max_sweeps:
            if use_newton and corrections < MAX_CORRECTIONS:
                values, e_new, accepted = _newton_correction(values, mesh, energy)
                if accepted:
                    corrections += 1
                    energy = e_new
                    trace.append(energy)
                    events.append("correction")
                else:
                    use_newton = False
            displacement = _gs_sweep(values, schedule, local_tol, pool, chunk)
            sweeps += 1
            energy = discrete_energy(mesh, values)
            trace.append(energy)
            events.append("sweep")
            if displacement <= tol:
                converged = True
                break
    finally:
        if pool is not None:
            pool.shutdown()
    values[data.indices] = data.values
    hmap = DiscreteMap(mesh, values)
    report = SolveReport(sweeps, displacement, trace, converged, corrections,
                         tension_residual(mesh, hmap), tol, schedule.n_colors, events)
    return hmap, report


# --- evaluation between vertices ----------------------------------------------

def riemannian_barycentric(corners, x):
    """Weights ``lam`` (summing to 1) with ``sum lam_i log_x corners_i = 0``.

    ``corners`` has shape ``(P, 3, 3)``, ``x`` ``(P, 3)``; x is then the
    weighted Karcher mean of the corners.
    """
    logs = hb.to_frame(x[:, None, :], hb.logmap(x[:, None, :], corners))
    A = np.concatenate([np.swapaxes(logs, 1, 2), np.ones((len(x), 1, 3))], axis=1)
    rhs = np.zeros((len(x), 3))
    rhs[:, 2] = 1.0
    return np.linalg.solve(A, rhs[..., None])[..., 0]


class Interpolator:
    """Evaluates a DiscreteMap at arbitrary points of the meshed ball."""

    def __init__(self, hmap: DiscreteMap):
        self.hmap = hmap
        self.locator = Locator(hmap.mesh)

    def __call__(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if x.shape[-1] != 3:
            raise GeometryError("interpolation points must lie in H^2")
        mesh = self.hmap.mesh
        tri = self.locator.locate(x)
        if np.any(tri < 0):
            raise GeometryError("point outside the meshed ball")
        corners = mesh.vertices[mesh.triangles[tri]]
        lam = np.clip(riemannian_barycentric(corners, hb.project(x)), 0.0, None)
        vals = self.hmap.values[mesh.triangles[tri]]
        y, _ = hb.karcher(vals, lam, tol=1e-12, strict=False)
        return y


def interpolate(mesh: BallMesh, hmap: DiscreteMap, x):
    """Value of ``hmap`` at ``x`` (HPoint or array of points)."""
    if hmap.mesh is not mesh:
        raise GeometryError("map belongs to a different mesh")
    if isinstance(x, HPoint):
        return HPoint(Interpolator(hmap)(x.coords)[0])
    return Interpolator(hmap)(x)


# --- solution dump ------------------------------------------------------------

def dump_columns(target_dim):
    return ["vertex"] + [f"x{i}" for i in range(target_dim + 1)]


def dumps_solution(hmap: DiscreteMap) -> str:
    """CSV text, one row per vertex: ``vertex,x0,x1,x2[,x3]`` (hyperboloid coordinates)."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(dump_columns(hmap.target_dim))
    for i, row in enumerate(hmap.values):
        w.writerow([i] + [repr(float(v)) for v in row])
    return buf.getvalue()


def save_solution(hmap: DiscreteMap, path):
    text = dumps_solution(hmap)
    _atomic_write(path, lambda fh: fh.write(text), mode="w")


def load_solution(path, mesh: BallMesh) -> DiscreteMap:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    if header[0] != "vertex" or header != dump_columns(len(header) - 2):
        raise GeometryError(f"{path}: unexpected solution header {header}")
    idx = np.array([int(r[0]) for r in body])
    if len(idx) != mesh.n_vertices or not np.array_equal(idx, np.arange(mesh.n_vertices)):
        raise GeometryError(f"{path}: expected one row per mesh vertex")
    values = np.array([[float(v) for v in r[1:]] for r in body])
    return DiscreteMap(mesh, values)
