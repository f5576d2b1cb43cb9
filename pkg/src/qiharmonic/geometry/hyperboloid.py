"""Vectorized kernel for the hyperboloid model of H^n (curvature -1).

Points are arrays of shape ``(..., n+1)`` with ``<x,x> = -1`` and ``x[0] >= 1``;
tangent vectors at ``p`` share that shape and satisfy ``<p,v> = 0``.
The Minkowski form is ``<x,y> = -x0 y0 + sum_i xi yi``.

Far from the origin the coordinates grow like ``cosh(r)`` and the textbook
formula ``acosh(-<p,q>)`` loses every digit of a short distance to
cancellation.  Distances are therefore computed from Poincare-ball
coordinates, where ``1 - |y|^2 = 2 / (1 + x0)`` is exact, and tangent norms
from the spatial part alone.  The resulting absolute accuracy is about
``1e-16 * cosh(r)``, which is the resolution of the coordinates themselves.
"""

from __future__ import annotations

import numpy as np

from ..errors import GeometryError, KarcherDivergence

_SMALL = 1e-8


def origin(n, dtype=float):
    o = np.zeros(n + 1, dtype=dtype)
    o[0] = 1.0
    return o


def mdot(x, y):
    """Minkowski inner product over the last axis."""
    return np.sum(x[..., 1:] * y[..., 1:], axis=-1) - x[..., 0] * y[..., 0]


def project(x):
    """Put ``x`` back on the upper sheet, keeping its spatial part."""
    x = np.array(x, dtype=float, copy=True)
    x[..., 0] = np.sqrt(1.0 + np.sum(x[..., 1:] ** 2, axis=-1))
    return x


def precision_floor(y):
    """Smallest length resolvable near ``y``: about eps * cosh(r)^2 at distance r from the origin."""
    y = np.asarray(y, dtype=float)
    return 4.0 * np.finfo(float).eps * y[..., 0] ** 2


def sinhc(t):
    """sinh(t)/t, with the removable singularity filled in."""
    t = np.asarray(t, dtype=float)
    small = np.abs(t) < _SMALL
    safe = np.where(small, 1.0, t)
    return np.where(small, 1.0 + t * t / 6.0, np.sinh(safe) / safe)


def check_dims(*arrays):
    dims = {np.shape(a)[-1] for a in arrays}
    if len(dims) != 1:
        raise GeometryError(f"dimension mismatch: trailing sizes {sorted(dims)}")


def distance(p, q):
    """Geodesic distance, accurate for nearby points far from the origin."""
    check_dims(p, q)
    sp = 1.0 + p[..., 0]
    sq = 1.0 + q[..., 0]
    yp = p[..., 1:] / sp[..., None]
    yq = q[..., 1:] / sq[..., None]
    chord = np.sqrt(np.sum((yp - yq) ** 2, axis=-1))
    return 2.0 * np.arcsinh(0.5 * chord * np.sqrt(sp * sq))


def tangentize(p, v):
    """Recompute the time component of ``v`` so it is tangent at ``p``."""
    v = np.array(v, dtype=float, copy=True)
    v[..., 0] = np.sum(p[..., 1:] * v[..., 1:], axis=-1) / p[..., 0]
    return v


def tnorm2(p, v):
    """Squared norm of the tangent vector ``v`` at ``p``.

    Only the spatial part of ``v`` is used: writing ``a = <p_s, v_s>``, the
    norm is ``|v_s - (a/|p_s|^2) p_s|^2 + a^2 / (|p_s|^2 p0^2)``.
    """
    ps = p[..., 1:]
    vs = v[..., 1:]
    pn2 = np.sum(ps * ps, axis=-1)
    a = np.sum(ps * vs, axis=-1)
    nonzero = pn2 > 0.0
    pn2_safe = np.where(nonzero, pn2, 1.0)
    ratio = np.where(nonzero, a / pn2_safe, 0.0)
    w = vs - ratio[..., None] * ps
    return np.sum(w * w, axis=-1) + np.where(nonzero, a * ratio / (p[..., 0] ** 2), 0.0)


def tnorm(p, v):
    return np.sqrt(tnorm2(p, v))


def tinner(p, u, v):
    """Riemannian inner product of two tangent vectors at ``p`` (polarization)."""
    return 0.25 * (tnorm2(p, u + v) - tnorm2(p, u - v))


def expmap(p, v):
    """Exponential map, evaluated through the boost frame at ``p``.

    With ``p = (cosh r, sinh r * phat)`` and unit direction ``u`` at angle
    ``phi`` to ``phat`` (in frame coordinates), the endpoint is
    ``cosh(r+d)(1+cos phi)/2 + cosh(r-d)(1-cos phi)/2`` in time and a similar
    combination in space.  Both weights are computed as squared norms, so
    there is no cancellation between terms of size ``cosh(r) cosh(d)``.
    """
    check_dims(p, v)
    p = np.asarray(p, dtype=float)
    c = to_frame(p, v)
    d = np.sqrt(np.sum(c * c, axis=-1))
    sr, phat = _polar(p)
    r = np.arcsinh(sr)
    moving = d > 0.0
    u = np.where(moving[..., None], c / np.where(moving, d, 1.0)[..., None], 0.0)
    wp = np.where(moving, 0.25 * np.sum((u + phat) ** 2, axis=-1), 0.5)
    wm = np.where(moving, 0.25 * np.sum((u - phat) ** 2, axis=-1), 0.5)
    cos_phi = np.sum(u * phat, axis=-1)
    radial = np.sinh(r + d) * wp + np.sinh(r - d) * wm
    xs = radial[..., None] * phat + np.sinh(d)[..., None] * (u - cos_phi[..., None] * phat)
    q = project(np.concatenate([np.zeros(xs.shape[:-1] + (1,)), xs], axis=-1))
    return np.where(moving[..., None], q, p)


def _polar(x):
    """``(sinh r, unit spatial direction)`` of points, with e_1 at the origin."""
    xs = x[..., 1:]
    sr = np.sqrt(np.sum(xs * xs, axis=-1))
    at_origin = sr == 0.0
    first = np.zeros_like(xs)
    first[..., 0] = 1.0
    xhat = np.where(at_origin[..., None], first, xs / np.where(at_origin, 1.0, sr)[..., None])
    return sr, xhat


def logmap(p, q):
    """Tangent vector at ``p`` pointing to ``q`` with length ``d(p, q)``.

    The direction is read off the frame coordinates ``<E_j(p), q>``, whose
    radial part is rewritten as ``sinh(rq-rp)(1+cos psi)/2 - sinh(rq+rp)(1-cos psi)/2``
    (``psi`` the angle between the spatial directions), the mirror image of
    the formula used in :func:`expmap`.
    """
    check_dims(p, q)
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    d = distance(p, q)
    sp, phat = _polar(p)
    sq, qhat = _polar(q)
    rp = np.arcsinh(sp)
    rq = np.arcsinh(sq)
    wp = 0.25 * np.sum((qhat + phat) ** 2, axis=-1)
    wm = 0.25 * np.sum((qhat - phat) ** 2, axis=-1)
    beta = np.sum(q[..., 1:] * phat, axis=-1)
    perp = q[..., 1:] - beta[..., None] * phat
    radial = np.sinh(rq - rp) * wp - np.sinh(rq + rp) * wm
    w = perp + radial[..., None] * phat
    wn = np.sqrt(np.sum(w * w, axis=-1))
    moving = (wn > 0.0) & (d > 0.0)
    c = np.where(moving[..., None], w * (d / np.where(moving, wn, 1.0))[..., None], 0.0)
    return from_frame(p, c)


def geodesic(p, q, t):
    """Point at fraction ``t`` of the way from ``p`` to ``q``."""
    t = np.asarray(t, dtype=float)
    return expmap(p, t[..., None] * logmap(p, q))


def transport(p, q, v):
    """Parallel transport of ``v`` from ``p`` to ``q`` along the geodesic."""
    check_dims(p, q, v)
    lpq = logmap(p, q)
    lqp = logmap(q, p)
    d2 = tnorm2(p, lpq)
    coef = np.where(d2 > 0.0, tinner(p, lpq, v) / np.where(d2 > 0.0, d2, 1.0), 0.0)
    return tangentize(q, v - coef[..., None] * (lpq + lqp))


def frame(y):
    """Orthonormal frame of T_y, shape ``(..., n, n+1)``.

    It is the standard basis at the origin carried to ``y`` by the boost
    along the geodesic from the origin, so it varies smoothly with ``y``.
    """
    y = np.asarray(y, dtype=float)
    n = y.shape[-1] - 1
    ys = y[..., 1:]
    eye = np.broadcast_to(np.eye(n), y.shape[:-1] + (n, n))
    spatial = eye + ys[..., :, None] * ys[..., None, :] / (1.0 + y[..., 0])[..., None, None]
    return np.concatenate([ys[..., :, None], spatial], axis=-1)


def to_frame(y, v):
    """Coordinates of tangent vectors ``v`` at ``y`` in :func:`frame` ``(y)``."""
    ys = y[..., 1:]
    vs = v[..., 1:]
    a = np.sum(ys * vs, axis=-1)
    return vs - ys * (a / (y[..., 0] * (1.0 + y[..., 0])))[..., None]


def from_frame(y, c):
    """Inverse of :func:`to_frame`."""
    ys = y[..., 1:]
    a = np.sum(ys * c, axis=-1)
    vs = c + ys * (a / (1.0 + y[..., 0]))[..., None]
    return np.concatenate([a[..., None], vs], axis=-1)


def boost_matrix(y):
    """Lorentz matrix with columns ``[y, E_1, ..., E_n]`` (maps origin to ``y``)."""
    y = np.asarray(y, dtype=float)
    return np.concatenate([y[None, :], frame(y)], axis=0).T


def to_poincare(x):
    return x[..., 1:] / (1.0 + x[..., 0])[..., None]


def from_poincare(b):
    b = np.asarray(b, dtype=float)
    r2 = np.sum(b * b, axis=-1)
    denom = 1.0 - r2
    x0 = (1.0 + r2) / denom
    return np.concatenate([x0[..., None], 2.0 * b / denom[..., None]], axis=-1)


def to_klein(x):
    return x[..., 1:] / x[..., 0][..., None]


def sample_points(rng, size, dim, radius, center=None, mode="volume"):
    """Random points in the ball of the given radius.

    ``mode="volume"`` draws from the hyperbolic volume measure (for dim 2 and
    3, by inverting the radial CDF numerically otherwise); ``mode="radius"``
    draws the radius uniformly, which puts more points near the center.
    """
    directions = rng.standard_normal((size, dim))
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    u = rng.random(size)
    if mode == "radius":
        r = radius * u
    elif dim == 2:
        r = np.arccosh(1.0 + u * (np.cosh(radius) - 1.0))
    else:
        grid = np.linspace(0.0, radius, 4097)
        dens = np.sinh(grid) ** (dim - 1)
        cdf = np.concatenate([[0.0], np.cumsum(0.5 * (dens[1:] + dens[:-1]) * np.diff(grid))])
        r = np.interp(u * cdf[-1], cdf, grid)
    v = np.zeros((size, dim + 1))
    v[:, 1:] = r[:, None] * directions
    pts = expmap(np.broadcast_to(origin(dim), v.shape), v)
    if center is not None:
        pts = pts @ boost_matrix(center).T
        pts = project(pts)
    return pts


def minkowski_mean(points, w):
    m = np.sum(w[..., None] * points, axis=-2)
    n2 = -mdot(m, m)
    ok = n2 > 0.0
    scale = np.where(ok, 1.0 / np.sqrt(np.where(ok, n2, 1.0)), 1.0)
    fallback = np.take_along_axis(points, np.argmax(w, axis=-1)[..., None, None], axis=-2)[..., 0, :]
    return np.where(ok[..., None], project(m * scale[..., None]), fallback)


def karcher(points, weights, init=None, tol=1e-12, max_iter=200, strict=True):
    """Weighted Riemannian center of mass, batched over leading axes.

    ``points`` has shape ``(..., n, d+1)``, ``weights`` ``(..., n)``.  The
    fixed-point step ``y <- exp_y(sum w_i log_y p_i / sum w_i)`` is taken with
    unit length and halved whenever the objective ``sum w_i d^2(y, p_i)``
    goes up.  Returns ``(y, residual)`` where residual is the norm of the
    normalized gradient ``sum w_i log_y p_i / sum w_i``.  Each batch entry
    stops moving once its residual is below ``tol``, so results do not depend
    on how problems are batched.  With ``strict=False`` the last iterate is
    returned instead of raising.
    """
    points = np.asarray(points, dtype=float)
    weights = np.asarray(weights, dtype=float)
    total = np.sum(weights, axis=-1)
    if np.any(total <= 0.0) or np.any(weights < 0.0):
        raise GeometryError("karcher weights must be nonnegative with positive sum")
    w = weights / total[..., None]
    y = minkowski_mean(points, w) if init is None else np.array(init, dtype=float)
    batch = y.shape[:-1]
    step = np.ones(batch)
    y_prev = y.copy()
    f_prev = np.full(batch, np.inf)
    g_prev = np.zeros_like(y)
    done = np.zeros(batch, dtype=bool)
    for _ in range(max_iter):
        logs = logmap(y[..., None, :], points)
        g = np.sum(w[..., None] * logs, axis=-2)
        f = np.sum(w * tnorm2(y[..., None, :], logs), axis=-1)
        res = tnorm(y, g)
        # the objective carries rounding noise of relative size ~1e-13 far from O
        worse = f > f_prev * (1.0 + 1e-10) + 1e-300
        if np.any(worse):
            # reject: go back and shorten the step
            y = np.where(worse[..., None], y_prev, y)
            g = np.where(worse[..., None], g_prev, g)
            f = np.where(worse, f_prev, f)
            res = np.where(worse, tnorm(y, g), res)
            step = np.where(worse, 0.5 * step, np.minimum(1.0, 2.0 * step))
        done |= res <= tol
        if np.all(done):
            return y, res
        y_prev, f_prev, g_prev = y, f, g
        y = np.where(done[..., None], y, expmap(y, step[..., None] * g))
    logs = logmap(y[..., None, :], points)
    res = tnorm(y, np.sum(w[..., None] * logs, axis=-2))
    if np.all(res <= tol) or not strict:
        return y, res
    raise KarcherDivergence("karcher mean did not converge", float(np.max(res)))
