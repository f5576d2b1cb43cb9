"""Triangulated geodesic balls in H^2 with cotangent weights and dual areas."""

from __future__ import annotations

import hashlib
import json
import math
import os
import tempfile
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp
from scipy.spatial import cKDTree

from .comparison import plane_triangle_angle
from .errors import GeometryError, MeshCapExceeded
from .geometry import HPoint
from .geometry import hyperboloid as hb

MESH_FORMAT_VERSION = 1
DEFAULT_VERTEX_CAP = 200_000
MAX_CLAMPED_FRACTION = 0.01


@dataclass(frozen=True)
class BallMesh:
    """Triangulation of B(O, R) in H^2.

    ``vertices`` are hyperboloid coordinates ``(N, 3)``; ``edges`` ``(E, 2)``
    with ``edges[:, 0] < edges[:, 1]``; ``weights`` are the cotangent weights
    ``(cot alpha + cot beta) / 2`` (negative ones clamped to zero, counted in
    ``clamped``); ``vertex_area`` is the hyperbolic area of each vertex's
    mixed Voronoi cell.
    """

    vertices: np.ndarray
    triangles: np.ndarray
    boundary: np.ndarray
    R: float
    O: HPoint
    h_mesh: float
    edges: np.ndarray = field(default=None)
    weights: np.ndarray = field(default=None)
    vertex_area: np.ndarray = field(default=None)
    clamped: int = 0
    triangle_area: np.ndarray = field(default=None)

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def interior(self):
        return np.flatnonzero(~self.boundary)

    @property
    def boundary_indices(self):
        return np.flatnonzero(self.boundary)

    @property
    def total_area(self):
        return float(np.sum(self.triangle_area))

    def edge_lengths(self):
        return hb.distance(self.vertices[self.edges[:, 0]], self.vertices[self.edges[:, 1]])

    def radii(self):
        """Distance of every vertex from O."""
        return hb.distance(self.vertices, np.broadcast_to(self.O.coords, self.vertices.shape))

    def distance_to_boundary(self):
        # boundary vertices sit on the sphere by construction
        return np.where(self.boundary, 0.0, np.maximum(self.R - self.radii(), 0.0))

    def weight_matrix(self):
        """Symmetric sparse matrix of edge weights."""
        n = self.n_vertices
        i, j = self.edges[:, 0], self.edges[:, 1]
        W = sp.coo_matrix((np.concatenate([self.weights, self.weights]), (np.concatenate([i, j]), np.concatenate([j, i]))), shape=(n, n))
        return W.tocsr()

    def laplacian_matrix(self):
        """Sparse ``L`` with ``(L u)_p = sum_q w_pq (u_q - u_p)`` (not divided by area)."""
        W = self.weight_matrix()
        return (W - sp.diags(np.asarray(W.sum(axis=1)).ravel())).tocsr()

    def hash(self):
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.vertices).tobytes())
        h.update(np.ascontiguousarray(self.triangles).tobytes())
        h.update(json.dumps([self.R, self.h_mesh]).encode())
        return h.hexdigest()

    def header(self):
        return {
            "format": "qiharmonic-mesh",
            "version": MESH_FORMAT_VERSION,
            "k": 2,
            "R": self.R,
            "h_mesh": self.h_mesh,
            "n_vertices": int(self.n_vertices),
            "n_triangles": int(len(self.triangles)),
            "n_edges": int(len(self.edges)),
            "n_boundary": int(self.boundary.sum()),
            "clamped": int(self.clamped),
            "center": self.O.coords.tolist(),
            "hash": self.hash(),
        }

    def validate(self, length_band=(0.5, 1.5)):
        """Check the structural invariants; raises GeometryError on failure."""
        r = self.radii()
        if np.any(r > self.R + 1e-9):
            raise GeometryError("vertex outside B(O, R)")
        if np.any(np.abs(r[self.boundary] - self.R) > 1e-9):
            raise GeometryError("boundary vertex off the sphere of radius R")
        lengths = self.edge_lengths()
        lo, hi = length_band
        if lengths.min() < lo * self.h_mesh or lengths.max() > hi * self.h_mesh:
            raise GeometryError(
                f"edge lengths [{lengths.min():.4g}, {lengths.max():.4g}] outside "
                f"[{lo}, {hi}] x h_mesh = {self.h_mesh}"
            )
        deg = np.bincount(self.edges.ravel(), minlength=self.n_vertices)
        wsum = np.bincount(self.edges.ravel(), weights=np.repeat(self.weights, 2), minlength=self.n_vertices)
        inner = ~self.boundary
        if np.any(deg[inner] < 3) or np.any(wsum[inner] <= 0):
            raise GeometryError("interior vertex with fewer than 3 edges or zero total weight")
        if np.any(self.vertex_area <= 0):
            raise GeometryError("nonpositive dual area")
        return True


def discrete_laplacian(mesh: BallMesh, u):
    """``(sum_q w_pq (u_q - u_p)) / area_p`` at every vertex (boundary rows included)."""
    u = np.asarray(u, dtype=float)
    i, j = mesh.edges[:, 0], mesh.edges[:, 1]
    du = mesh.weights * (u[j] - u[i])
    acc = np.bincount(i, weights=du, minlength=mesh.n_vertices) - np.bincount(j, weights=du, minlength=mesh.n_vertices)
    return acc / mesh.vertex_area


def _triangle_geometry(vertices, triangles):
    """Side lengths opposite each corner and corner angles, shape (T, 3)."""
    a = vertices[triangles[:, 0]]
    b = vertices[triangles[:, 1]]
    c = vertices[triangles[:, 2]]
    la = hb.distance(b, c)  # opposite corner 0
    lb = hb.distance(a, c)
    lc = hb.distance(a, b)
    ang = np.stack([plane_triangle_angle(la, lb, lc), plane_triangle_angle(lb, lc, la), plane_triangle_angle(lc, la, lb)], axis=1)
    return np.stack([la, lb, lc], axis=1), ang


def _mixed_area_fractions(lengths, angles):
    """Meyer et al. mixed-Voronoi split of each triangle among its corners, as fractions."""
    cot = 1.0 / np.tan(angles)
    l2 = lengths ** 2
    # Voronoi part at corner i: (|e_j|^2 cot(angle_j) + |e_k|^2 cot(angle_k)) / 8 where e_j is opposite j
    vor = np.stack([
        l2[:, 1] * cot[:, 1] + l2[:, 2] * cot[:, 2],
        l2[:, 2] * cot[:, 2] + l2[:, 0] * cot[:, 0],
        l2[:, 0] * cot[:, 0] + l2[:, 1] * cot[:, 1],
    ], axis=1) / 8.0
    obtuse = angles > 0.5 * np.pi
    any_obtuse = obtuse.any(axis=1)
    frac = vor / vor.sum(axis=1, keepdims=True)
    frac = np.where(any_obtuse[:, None], np.where(obtuse, 0.5, 0.25), frac)
    return frac


def edges_of(triangles):
    e = np.concatenate([triangles[:, [0, 1]], triangles[:, [1, 2]], triangles[:, [2, 0]]])
    e.sort(axis=1)
    return np.unique(e, axis=0)


def cotan_weights(mesh: BallMesh, max_clamped_fraction=MAX_CLAMPED_FRACTION) -> BallMesh:
    """Attach edges, cotangent weights, triangle areas and mixed dual areas.

    Weight of edge pq is half the sum of cot(angle opposite pq) over its (one
    or two) triangles, with angles from the hyperbolic side lengths.  Negative
    weights are clamped to 0; more than ``max_clamped_fraction`` clamped
    edges rejects the mesh.
    """
    tri = mesh.triangles
    lengths, angles = _triangle_geometry(mesh.vertices, tri)
    area = np.pi - angles.sum(axis=1)
    if np.any(area <= 0):
        raise GeometryError("degenerate triangle in mesh")
    edges = edges_of(tri)
    n = mesh.n_vertices
    key = edges[:, 0] * n + edges[:, 1]
    order = np.argsort(key)
    cot = 1.0 / np.tan(angles)
    w = np.zeros(len(edges))
    for corner, (p, q) in enumerate(((1, 2), (2, 0), (0, 1))):
        a, b = np.minimum(tri[:, p], tri[:, q]), np.maximum(tri[:, p], tri[:, q])
        idx = order[np.searchsorted(key[order], a * n + b)]
        np.add.at(w, idx, 0.5 * cot[:, corner])
    negative = w < 0
    clamped = int(negative.sum())
    if clamped > max_clamped_fraction * len(edges):
        raise GeometryError(f"{clamped} of {len(edges)} cotangent weights are negative; mesh rejected")
    w = np.where(negative, 0.0, w)
    frac = _mixed_area_fractions(lengths, angles)
    varea = np.bincount(tri.ravel(), weights=(frac * area[:, None]).ravel(), minlength=n)
    return replace(mesh, edges=edges, weights=w, vertex_area=varea, clamped=clamped, triangle_area=area)


def ring_layout(R, h_mesh):
    """Ring radii and vertex counts: radii i*dt, dt = R/ceil(R/h), ceil(2 pi sinh(r)/h) vertices."""
    n_rings = math.ceil(R / h_mesh - 1e-12)
    dt = R / n_rings
    radii = dt * np.arange(1, n_rings + 1)
    counts = np.ceil(2 * np.pi * np.sinh(radii) / h_mesh - 1e-12).astype(int)
    return radii, counts


def _zip_rings(inner, outer, points):
    """Triangulate the strip between two closed rings, always taking the shorter diagonal.

    Both rings are listed counterclockwise; the outer ring is rotated so that
    it starts at the vertex closest to ``inner[0]``.
    """
    na, nb = len(inner), len(outer)
    start = int(np.argmin(hb.distance(points[outer], np.broadcast_to(points[inner[0]], (nb, 3)))))
    outer = np.roll(outer, -start)
    # cosh d = -<x, y>, so comparing Minkowski products compares distances
    P = points.tolist()

    def cosh_dist(p, q):
        x, y = P[p], P[q]
        return x[0] * y[0] - x[1] * y[1] - x[2] * y[2]

    inner, outer = inner.tolist(), outer.tolist()
    tris = []
    i = j = 0
    while i < na or j < nb:
        a0, a1 = inner[i % na], inner[(i + 1) % na]
        b0, b1 = outer[j % nb], outer[(j + 1) % nb]
        if j == nb:
            advance_inner = True
        elif i == na:
            advance_inner = False
        else:
            advance_inner = cosh_dist(a1, b0) <= cosh_dist(a0, b1)
        if advance_inner:
            tris.append((a0, a1, b0))
            i += 1
        else:
            tris.append((a0, b1, b0))
            j += 1
    return tris


def build_polar_mesh(O: HPoint | None = None, R: float = 4.0, h_mesh: float = 0.1, cap: int = DEFAULT_VERTEX_CAP) -> BallMesh:
    """Geodesic polar mesh of B(O, R): concentric rings zipped into triangle strips."""
    O = HPoint.origin(2) if O is None else O
    if O.dim != 2:
        raise GeometryError("meshes are built for H^2 domains only")
    if R < 1.0:
        raise GeometryError(f"radius must be at least 1, got {R}")
    if not 0.01 <= h_mesh <= 0.5:
        raise GeometryError(f"h_mesh must lie in [0.01, 0.5], got {h_mesh}")
    radii, counts = ring_layout(R, h_mesh)
    total = 1 + int(counts.sum())
    if total > cap:
        raise MeshCapExceeded(
            f"mesh of B(O,{R}) with h_mesh={h_mesh} needs {total} vertices, above the cap of {cap}; "
            f"increase h_mesh or the cap"
        )
    pts = [np.array([[1.0, 0.0, 0.0]])]
    ring_ids = [np.array([0])]
    start = 1
    for i, (r, n) in enumerate(zip(radii, counts)):
        offset = 0.5 * (i % 2)
        phi = 2 * np.pi * (np.arange(n) + offset) / n
        ring = np.stack([np.full(n, np.cosh(r)), np.sinh(r) * np.cos(phi), np.sinh(r) * np.sin(phi)], axis=1)
        pts.append(ring)
        ring_ids.append(np.arange(start, start + n))
        start += n
    local = np.concatenate(pts)
    tris = []
    first = ring_ids[1]
    for j in range(len(first)):
        tris.append((0, first[j], first[(j + 1) % len(first)]))
    for i in range(1, len(radii)):
        tris.extend(_zip_rings(ring_ids[i], ring_ids[i + 1], local))
    tris = np.array(tris, dtype=np.int64)
    tris = _orient(local, tris)
    vertices = hb.project(local @ hb.boost_matrix(O.coords).T)
    boundary = np.zeros(total, dtype=bool)
    boundary[ring_ids[-1]] = True
    mesh = BallMesh(vertices, tris, boundary, float(R), O, float(h_mesh))
    return cotan_weights(mesh)


def _orient(vertices, tris):
    """Make every triangle counterclockwise in the Klein model."""
    k = hb.to_klein(vertices)
    a, b, c = k[tris[:, 0]], k[tris[:, 1]], k[tris[:, 2]]
    cross = (b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1]) - (b[:, 1] - a[:, 1]) * (c[:, 0] - a[:, 0])
    out = tris.copy()
    flip = cross < 0
    out[flip] = tris[flip][:, [0, 2, 1]]
    return out


def mesh_from_triangles(vertices, triangles, boundary, R, O=None, h_mesh=1.0) -> BallMesh:
    """Weighted mesh from an arbitrary triangulation (used for small test meshes)."""
    O = HPoint.origin(2) if O is None else O
    vertices = np.asarray(vertices, dtype=float)
    tris = _orient(vertices, np.asarray(triangles, dtype=np.int64))
    return cotan_weights(BallMesh(vertices, tris, np.asarray(boundary, dtype=bool), float(R), O, float(h_mesh)))


# --- cache files ------------------------------------------------------

def _atomic_write(path, writer, mode="wb"):
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-")
    try:
        with os.fdopen(fd, mode) as fh:
            writer(fh)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save_mesh(mesh: BallMesh, path):
    """Write a ``.npz`` cache; ``header`` holds a JSON document with k, R, h_mesh, counts, version, hash."""
    arrays = dict(
        header=np.array(json.dumps(mesh.header(), sort_keys=True)),
        vertices=mesh.vertices,
        triangles=mesh.triangles,
        boundary=mesh.boundary,
        edges=mesh.edges,
        weights=mesh.weights,
        vertex_area=mesh.vertex_area,
        triangle_area=mesh.triangle_area,
    )
    _atomic_write(path, lambda fh: np.savez(fh, **arrays))


def load_mesh(path) -> BallMesh:
    with np.load(path, allow_pickle=False) as data:
        header = json.loads(str(data["header"]))
        if header.get("format") != "qiharmonic-mesh" or header.get("version") != MESH_FORMAT_VERSION:
            raise GeometryError(f"{path}: unsupported mesh file (header {header})")
        mesh = BallMesh(
            data["vertices"], data["triangles"], data["boundary"], float(header["R"]),
            HPoint(np.array(header["center"])), float(header["h_mesh"]), data["edges"], data["weights"],
            data["vertex_area"], int(header["clamped"]), data["triangle_area"],
        )
    if mesh.hash() != header["hash"]:
        raise GeometryError(f"{path}: mesh hash mismatch")
    return mesh


def cached_polar_mesh(cache_dir, O=None, R=4.0, h_mesh=0.1, cap=DEFAULT_VERTEX_CAP) -> BallMesh:
    """build_polar_mesh with an on-disk cache keyed by (center, R, h_mesh)."""
    O = HPoint.origin(2) if O is None else O
    if cache_dir is None:
        return build_polar_mesh(O, R, h_mesh, cap)
    key = hashlib.sha256(json.dumps([O.coords.tolist(), R, h_mesh, MESH_FORMAT_VERSION]).encode()).hexdigest()[:16]
    path = os.path.join(cache_dir, f"mesh-R{R:g}-h{h_mesh:g}-{key}.npz")
    if os.path.exists(path):
        return load_mesh(path)
    mesh = build_polar_mesh(O, R, h_mesh, cap)
    save_mesh(mesh, path)
    return mesh


# --- point location -----------------------------------------------------

@dataclass
class Locator:
    """Triangle lookup in the Klein model, where geodesic triangles are straight."""

    mesh: BallMesh

    def __post_init__(self):
        self.klein = hb.to_klein(self.mesh.vertices)
        self.tree = cKDTree(self.klein)
        tri = self.mesh.triangles
        n = self.mesh.n_vertices
        order = np.argsort(tri.ravel(), kind="stable")
        self.vt_ptr = np.searchsorted(tri.ravel()[order], np.arange(n + 1))
        self.vt_tri = order // 3

    def barycentric(self, t, q):
        a, b, c = (self.klein[self.mesh.triangles[t, i]] for i in range(3))
        m = np.stack([b - a, c - a], axis=-1)
        lam = np.linalg.solve(m, (q - a)[..., None])[..., 0]
        return np.concatenate([1.0 - lam.sum(axis=-1, keepdims=True), lam], axis=-1)

    def locate(self, x, k=8, eps=1e-9):
        """Index of a triangle containing each point (Euclidean test in Klein coordinates)."""
        q = hb.to_klein(np.atleast_2d(np.asarray(x, dtype=float)))
        out = np.full(len(q), -1, dtype=np.int64)
        kk = min(k, self.mesh.n_vertices)
        while True:
            todo = np.flatnonzero(out < 0)
            if len(todo) == 0:
                break
            _, nearest = self.tree.query(q[todo], k=kk)
            nearest = np.atleast_2d(nearest)
            for row, p in enumerate(todo):
                for v in nearest[row]:
                    for t in self.vt_tri[self.vt_ptr[v]:self.vt_ptr[v + 1]]:
                        bc = self.barycentric(t, q[p])
                        if bc.min() >= -eps:
                            out[p] = t
                            break
                    if out[p] >= 0:
                        break
            if kk >= min(64, self.mesh.n_vertices):
                break
            kk = min(4 * kk, self.mesh.n_vertices)
        return out
