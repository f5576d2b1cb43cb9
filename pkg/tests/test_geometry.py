import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qiharmonic.errors import GeometryError, KarcherDivergence
from qiharmonic.geometry import (
    HPoint,
    TangentVector,
    angle,
    dist,
    embed_totally_geodesic,
    exp,
    geodesic_point,
    gromov_product,
    karcher_mean,
    log,
    parallel_transport,
)
from qiharmonic.geometry import hyperboloid as hb


def random_point(rng, dim=2, radius=6.0):
    return HPoint(hb.sample_points(rng, 1, dim, radius, mode="radius")[0])


@st.composite
def points(draw, dim=2, max_radius=10.0):
    r = draw(st.floats(0.0, max_radius))
    direction = np.array(draw(st.lists(st.floats(-1, 1), min_size=dim, max_size=dim)))
    norm = np.linalg.norm(direction)
    if norm < 1e-3:
        direction = np.eye(dim)[0]
        norm = 1.0
    v = np.concatenate([[0.0], r * direction / norm])
    return HPoint(hb.expmap(hb.origin(dim), v))


class TestHPoint:
    def test_renormalizes_drift(self):
        p = HPoint(np.array([1.0 + 1e-6, 0.0, 0.0]))
        assert abs(hb.mdot(p.coords, p.coords) + 1.0) < 1e-12

    def test_rejects_lower_sheet(self):
        with pytest.raises(GeometryError):
            HPoint(np.array([-1.0, 0.0, 0.0]))

    def test_rejects_bad_shape(self):
        with pytest.raises(GeometryError):
            HPoint(np.array([1.0, 0.0]))

    def test_immutable(self):
        p = HPoint.origin(2)
        with pytest.raises(ValueError):
            p.coords[0] = 2.0

    def test_tangent_orthogonal(self, rng):
        p = random_point(rng)
        v = TangentVector(p, rng.standard_normal(3))
        assert abs(hb.mdot(p.coords, v.components)) < 1e-10 * p.coords[0] ** 2


class TestDist:
    def test_same_point(self):
        o = HPoint.origin(2)
        assert dist(o, o) == 0.0

    def test_coordinate_geodesic(self):
        q = HPoint(np.array([np.cosh(2.0), np.sinh(2.0), 0.0]))
        assert dist(HPoint.origin(2), q) == pytest.approx(2.0, abs=1e-14)

    def test_dimension_mismatch(self):
        with pytest.raises(GeometryError):
            dist(HPoint.origin(2), HPoint.origin(3))

    def test_curvature_scale(self):
        q = HPoint(np.array([np.cosh(2.0), np.sinh(2.0), 0.0]), curvature_scale=2.0)
        assert dist(HPoint.origin(2, 2.0), q) == pytest.approx(4.0)

    def test_against_arclength_quadrature(self, rng):
        # Gauss-Legendre quadrature of the Minkowski speed of t -> geodesic_point(p, q, t),
        # speed from 4th-order central differences of the ambient coordinates
        nodes, weights = np.polynomial.legendre.leggauss(40)
        t = 0.5 * (nodes + 1.0)
        h = 2e-4

        def curve(s):
            return hb.geodesic(p.coords, q.coords, s)

        for _ in range(5):
            p = random_point(rng, radius=3.0)
            q = random_point(rng, radius=3.0)
            vel = (-curve(t + 2 * h) + 8 * curve(t + h) - 8 * curve(t - h) + curve(t - 2 * h)) / (12 * h)
            speed = np.sqrt(hb.mdot(vel, vel))
            assert 0.5 * np.sum(weights * speed) == pytest.approx(dist(p, q), abs=1e-8)

    def test_tiny_distance_far_out(self):
        p = HPoint(hb.expmap(hb.origin(2), np.array([0.0, 15.0, 0.0])))
        v = TangentVector(p, hb.from_frame(p.coords, np.array([0.0, 1e-7])))
        assert dist(p, exp(p, v)) == pytest.approx(1e-7, rel=1e-5)

    @settings(max_examples=200, deadline=None)
    @given(points(), points(), points())
    def test_metric_axioms(self, p, q, r):
        assert dist(p, q) == dist(q, p)
        assert dist(p, q) >= 0.0
        assert dist(p, r) <= dist(p, q) + dist(q, r) + 1e-10


class TestExpLog:
    def test_exp_zero(self, rng):
        p = random_point(rng)
        assert exp(p, TangentVector(p, np.zeros(3))) == p

    def test_coordinate_geodesic(self):
        o = HPoint.origin(2)
        q = exp(o, TangentVector(o, np.array([0.0, 1.5, 0.0])))
        np.testing.assert_allclose(q.coords, [np.cosh(1.5), np.sinh(1.5), 0.0], atol=1e-14)

    def test_log_self(self, rng):
        p = random_point(rng)
        assert log(p, p).norm == 0.0

    @settings(max_examples=200, deadline=None)
    @given(points(dim=3, max_radius=5.0), points(dim=3, max_radius=15.0))
    def test_round_trip(self, p, q):
        v = log(p, q)
        assert v.norm == pytest.approx(dist(p, q), abs=1e-10)
        back = exp(p, v)
        assert np.max(np.abs(back.coords - q.coords)) <= 1e-9 * np.max(np.abs(q.coords))
        assert np.max(np.abs(log(p, back).components - v.components)) <= 1e-9 * max(1.0, p.coords[0])

    def test_vectorized_round_trip(self, rng):
        p = hb.sample_points(rng, 2000, 3, 10.0)
        c = rng.standard_normal((2000, 3))
        c *= 20.0 * rng.random((2000, 1)) / np.linalg.norm(c, axis=1, keepdims=True)
        q = hb.expmap(p, hb.from_frame(p, c))
        assert np.allclose(hb.distance(p, q), np.linalg.norm(c, axis=1), atol=1e-9)
        np.testing.assert_allclose(hb.to_frame(p, hb.logmap(p, q)), c, atol=1e-9)


class TestGeodesicPoint:
    def test_endpoints(self, rng):
        p, q = random_point(rng), random_point(rng)
        assert geodesic_point(p, q, 0.0) == p
        assert geodesic_point(p, q, 1.0) == q

    def test_out_of_range(self):
        o = HPoint.origin(2)
        with pytest.raises(GeometryError):
            geodesic_point(o, o, 1.5)

    def test_fraction_of_length(self, rng):
        p, q = random_point(rng), random_point(rng)
        for t in (0.1, 0.37, 0.9):
            assert dist(p, geodesic_point(p, q, t)) == pytest.approx(t * dist(p, q), abs=1e-10)

    def test_midpoint_is_karcher(self, rng):
        p, q = random_point(rng), random_point(rng)
        mid = karcher_mean([(p, 1.0), (q, 1.0)])
        assert dist(mid, geodesic_point(p, q, 0.5)) < 1e-8


class TestTransport:
    def test_identity(self, rng):
        p = random_point(rng)
        v = TangentVector(p, rng.standard_normal(3))
        assert parallel_transport(p, p, v) is v

    def test_norm_preserved(self, rng):
        for _ in range(50):
            p, q = random_point(rng), random_point(rng)
            v = TangentVector(p, rng.standard_normal(3))
            assert parallel_transport(p, q, v).norm == pytest.approx(v.norm, abs=1e-10 * max(1, v.norm))

    def test_tangent_along_geodesic(self):
        o = HPoint.origin(2)
        q = HPoint(np.array([np.cosh(3.0), np.sinh(3.0), 0.0]))
        v = TangentVector(o, np.array([0.0, 1.0, 0.0]))
        w = parallel_transport(o, q, v)
        np.testing.assert_allclose(w.components, [np.sinh(3.0), np.cosh(3.0), 0.0], atol=1e-12)

    def test_inner_products_preserved(self, rng):
        p, q = random_point(rng, 3), random_point(rng, 3)
        u = TangentVector(p, rng.standard_normal(4))
        v = TangentVector(p, rng.standard_normal(4))
        tu, tv = parallel_transport(p, q, u), parallel_transport(p, q, v)
        assert tu.inner(tv) == pytest.approx(u.inner(v), abs=1e-9)


class TestAngle:
    def test_basic(self):
        o = HPoint.origin(2)
        e1 = TangentVector(o, np.array([0.0, 1.0, 0.0]))
        e2 = TangentVector(o, np.array([0.0, 0.0, 3.0]))
        assert angle(e1, e1) == 0.0
        assert angle(e1, -e1) == pytest.approx(np.pi)
        assert angle(e1, e2) == pytest.approx(np.pi / 2)

    def test_symmetric_and_in_range(self, rng):
        p = random_point(rng)
        for _ in range(20):
            u = TangentVector(p, rng.standard_normal(3))
            v = TangentVector(p, rng.standard_normal(3))
            a = angle(u, v)
            assert 0.0 <= a <= np.pi
            assert a == angle(v, u)

    def test_zero_vector(self):
        o = HPoint.origin(2)
        with pytest.raises(GeometryError):
            angle(TangentVector(o, np.zeros(3)), TangentVector(o, np.array([0.0, 1.0, 0.0])))


class TestGromovProduct:
    def test_on_geodesic(self, rng):
        p, q = random_point(rng), random_point(rng)
        m = geodesic_point(p, q, 0.3)
        assert gromov_product(m, p, q) == pytest.approx(0.0, abs=1e-10)

    def test_equal_points(self, rng):
        x0, x1 = random_point(rng), random_point(rng)
        assert gromov_product(x0, x1, x1) == pytest.approx(dist(x0, x1), abs=1e-12)

    @settings(max_examples=200, deadline=None)
    @given(points(), points(), points())
    def test_identities(self, x0, x1, x2):
        g = gromov_product(x0, x1, x2)
        assert g == 0.5 * (dist(x0, x1) + dist(x0, x2) - dist(x1, x2))
        assert -1e-10 <= g <= min(dist(x0, x1), dist(x0, x2)) + 1e-10
        assert gromov_product(x0, x1, x2) + gromov_product(x1, x0, x2) == pytest.approx(dist(x0, x1), abs=1e-12)


class TestKarcher:
    def test_single_point(self, rng):
        p = random_point(rng)
        assert dist(karcher_mean([(p, 2.0)]), p) < 1e-12

    def test_two_points_weight_ratio(self, rng):
        p, q = random_point(rng), random_point(rng)
        for w1, w2 in [(1.0, 3.0), (5.0, 1.0), (0.2, 0.7)]:
            y = karcher_mean([(p, w1), (q, w2)], tol=1e-12)
            assert dist(y, geodesic_point(p, q, w2 / (w1 + w2))) < 1e-9

    def test_rotated_triangle(self, rng):
        center = random_point(rng, radius=3.0)
        boost = hb.boost_matrix(center.coords)
        pts = []
        for k in range(3):
            phi = 0.4 + 2 * np.pi * k / 3
            local = hb.expmap(hb.origin(2), np.array([0.0, 2.5 * np.cos(phi), 2.5 * np.sin(phi)]))
            pts.append((HPoint(boost @ local), 1.0))
        assert dist(karcher_mean(pts), center) < 1e-9

    def test_order_independent(self, rng):
        pts = [(random_point(rng), w) for w in rng.random(7) + 0.1]
        a = karcher_mean(pts, tol=1e-11)
        b = karcher_mean(pts[::-1], tol=1e-11)
        assert dist(a, b) < 1e-10

    def test_residual_below_tol(self, rng):
        arr = hb.sample_points(rng, 12, 2, 8.0)
        w = rng.random(12)
        y, res = hb.karcher(arr, w, tol=1e-11)
        g = np.sum((w / w.sum())[:, None] * hb.logmap(y[None, :], arr), axis=0)
        assert hb.tnorm(y, g) <= 1e-11

    def test_divergence_raises_with_residual(self, rng):
        arr = hb.sample_points(rng, 12, 2, 8.0)
        with pytest.raises(KarcherDivergence) as err:
            hb.karcher(arr, np.ones(12), tol=1e-30, max_iter=2)
        assert err.value.residual > 0

    def test_bad_weights(self):
        with pytest.raises(GeometryError):
            karcher_mean([(HPoint.origin(2), 0.0)])


class TestEmbedding:
    def test_same_dim(self, rng):
        p = random_point(rng)
        assert embed_totally_geodesic(p, 2) == p

    def test_preserves_distance(self, rng):
        for _ in range(20):
            p, q = random_point(rng), random_point(rng)
            ep, eq = embed_totally_geodesic(p, 3), embed_totally_geodesic(q, 3)
            assert dist(ep, eq) == dist(p, q)
            assert ep.coords[3] == 0.0

    def test_too_small(self):
        with pytest.raises(GeometryError):
            embed_totally_geodesic(HPoint.origin(3), 2)


class TestFrame:
    def test_orthonormal(self, rng):
        y = hb.sample_points(rng, 10, 3, 7.0)
        E = hb.frame(y)
        for i in range(3):
            assert np.allclose(hb.mdot(y, E[:, i]), 0.0, atol=1e-9 * y[:, 0] ** 2)
            for j in range(3):
                assert np.allclose(hb.mdot(E[:, i], E[:, j]), float(i == j), atol=1e-8 * y[:, 0] ** 2)

    def test_frame_round_trip(self, rng):
        y = hb.sample_points(rng, 10, 3, 7.0)
        c = rng.standard_normal((10, 3))
        np.testing.assert_allclose(hb.to_frame(y, hb.from_frame(y, c)), c, atol=1e-10)
        np.testing.assert_allclose(hb.tnorm(y, hb.from_frame(y, c)), np.linalg.norm(c, axis=1), rtol=1e-10)
