import numpy as np
import pytest

from qiharmonic.errors import GeometryError
from qiharmonic.geometry import HPoint
from qiharmonic.geometry import hyperboloid as hb
from qiharmonic.mesh import build_polar_mesh, discrete_laplacian
from qiharmonic.qimaps import (
    QuasiIsometricMap,
    compose_with_embedding,
    isometry_matrix,
    make_horocyclic_shear,
    make_isometry,
)
from qiharmonic.solver import (
    BoundaryData,
    discrete_energy,
    dumps_solution,
    harmonic_extension,
    initial_values,
    interpolate,
    load_solution,
    restrict_boundary,
    save_solution,
    solve_dirichlet,
    solve_scalar_dirichlet,
    tension_residual,
)


@pytest.fixture(scope="module")
def mesh():
    return build_polar_mesh(R=2.0, h_mesh=0.1)


@pytest.fixture(scope="module")
def small():
    return build_polar_mesh(R=1.0, h_mesh=0.2)


@pytest.fixture(scope="module")
def shear_solution(mesh):
    f = make_horocyclic_shear(1.0)
    data = restrict_boundary(f, mesh)
    return f, data, *solve_dirichlet(mesh, data, f=f)


def constant_map(y0, m=2):
    return QuasiIsometricMap(lambda x: np.broadcast_to(y0, x.shape[:-1] + (m + 1,)).copy(), 2, m, 1.0, 10.0)


def shear_oracle(x, lam):
    # upper half plane chart z = (x2 + i) / (x0 - x1)
    z = (x[..., 2] + 1j) / (x[..., 0] - x[..., 1])
    w = z * np.exp(lam * (np.angle(z) - np.pi / 2))
    u, v, r2 = w.real, w.imag, np.abs(w) ** 2
    return np.stack([(r2 + 1) / (2 * v), (r2 - 1) / (2 * v), u / v], axis=-1)


class TestBoundary:
    def test_identity(self, mesh):
        data = restrict_boundary(make_isometry(2), mesh)
        assert np.array_equal(data.indices, mesh.boundary_indices)
        assert np.allclose(data.values, mesh.vertices[mesh.boundary], atol=1e-12)

    def test_isometry_image_ring(self, mesh):
        f = make_isometry(2, 0.8, (0.4,))
        data = restrict_boundary(f, mesh)
        M = isometry_matrix(2, 0.8, (0.4,))
        assert np.allclose(data.values, mesh.vertices[mesh.boundary] @ M.T, atol=1e-10)
        centre = M @ hb.origin(2)
        d = hb.distance(data.values, np.broadcast_to(centre, data.values.shape))
        assert np.allclose(d, 2.0, atol=1e-9)

    def test_shear_closed_form(self, mesh):
        data = restrict_boundary(make_horocyclic_shear(1.0), mesh)
        expected = shear_oracle(mesh.vertices[mesh.boundary], 1.0)
        assert np.max(hb.distance(data.values, expected)) < 1e-9


class TestSolve:
    def test_constant_data_one_sweep(self, mesh):
        y0 = hb.sample_points(np.random.default_rng(2), 1, 2, 3.0)[0]
        f = constant_map(y0)
        hmap, rep = solve_dirichlet(mesh, restrict_boundary(f, mesh), f=f, accelerate=False)
        assert rep.sweeps == 1 and rep.converged
        assert np.max(hb.distance(hmap.values, np.broadcast_to(y0, hmap.values.shape))) < 1e-12

    def test_identity_reproduced_within_mesh_error(self, mesh):
        f = make_isometry(2)
        hmap, rep = solve_dirichlet(mesh, restrict_boundary(f, mesh), f=f)
        assert rep.converged and rep.energy_monotone()
        err = hb.distance(hmap.values, mesh.vertices)
        assert err.max() < 0.02 * (0.1 / 0.05) ** 2
        assert err[mesh.boundary].max() == 0.0

    def test_second_order_refinement(self):
        errs = []
        for h in (0.2, 0.1):
            m = build_polar_mesh(R=2.0, h_mesh=h)
            f = make_isometry(2)
            hmap, _ = solve_dirichlet(m, restrict_boundary(f, m), f=f)
            errs.append(hb.distance(hmap.values, m.vertices).max())
        # the mesh bias is second order in h_mesh
        assert 3.0 <= errs[0] / errs[1] <= 5.0

    def test_isometry_equivariance_into_h3(self, mesh, shear_solution):
        f, data, hmap, rep = shear_solution
        M = isometry_matrix(3, 1.1, (0.3, -0.7, 0.2))
        lifted = BoundaryData(data.indices, hb.project(hb_embed(data.values) @ M.T))
        g = QuasiIsometricMap(lambda x: hb.project(hb_embed(f.evaluate(x)) @ M.T), 2, 3)
        moved, rep3 = solve_dirichlet(mesh, lifted, f=g)
        assert rep3.converged
        expected = hb.project(hb_embed(hmap.values) @ M.T)
        assert np.max(hb.distance(moved.values, expected)) < 10 * rep.tol

    def test_embedded_identity_is_totally_geodesic(self, mesh):
        f = compose_with_embedding(make_isometry(2, 0.5, (1.0,)), 3)
        hmap, rep = solve_dirichlet(mesh, restrict_boundary(f, mesh), f=f)
        assert rep.converged
        assert np.max(np.abs(hmap.values[:, 3])) < 1e-12

    def test_order_independence(self, mesh, shear_solution):
        f, data, hmap, rep = shear_solution
        other, rep2 = solve_dirichlet(mesh, data, f=f, order="reverse")
        assert rep2.converged
        assert np.max(hb.distance(hmap.values, other.values)) < 10 * rep.tol

    def test_plain_gauss_seidel_agrees(self, small):
        f = make_horocyclic_shear(1.0)
        data = restrict_boundary(f, small)
        fast, r1 = solve_dirichlet(small, data, f=f)
        slow, r2 = solve_dirichlet(small, data, f=f, accelerate=False)
        assert r2.converged and r2.corrections == 0 and r2.sweeps > r1.sweeps
        assert r2.energy_monotone()
        # a sweep moving less than tol leaves an error of tol / (1 - contraction)
        assert np.max(hb.distance(fast.values, slow.values)) < 1e-4

    def test_energy_trace_monotone_every_step(self, shear_solution):
        *_, rep = shear_solution
        e = np.asarray(rep.energy_trace)
        assert len(e) == len(rep.events) + 1
        assert np.all(np.diff(e) <= 1e-12 * e[:-1])

    def test_threads_do_not_change_result(self, small):
        f = make_horocyclic_shear(1.0)
        data = restrict_boundary(f, small)
        a, _ = solve_dirichlet(small, data, f=f, accelerate=False, max_sweeps=5)
        b, _ = solve_dirichlet(small, data, f=f, accelerate=False, max_sweeps=5, threads=3, chunk=7)
        assert np.array_equal(a.values, b.values)

    def test_max_sweeps_reported(self, mesh):
        f = make_horocyclic_shear(1.0)
        hmap, rep = solve_dirichlet(mesh, restrict_boundary(f, mesh), f=f, accelerate=False, max_sweeps=3)
        assert not rep.converged and rep.sweeps == 3

    def test_tension_vanishes_at_solution(self, mesh, shear_solution):
        *_, hmap, rep = shear_solution
        assert tension_residual(mesh, hmap) < rep.tol

    def test_boundary_values_kept(self, mesh, shear_solution):
        f, data, hmap, _ = shear_solution
        assert hmap.boundary_error(data) == 0.0

    def test_incomplete_boundary_rejected(self, mesh):
        data = restrict_boundary(make_isometry(2), mesh)
        with pytest.raises(GeometryError):
            solve_dirichlet(mesh, BoundaryData(data.indices[1:], data.values[1:]), f=make_isometry(2))


def hb_embed(x):
    return np.concatenate([x, np.zeros(x.shape[:-1] + (1,))], axis=-1)


class TestEnergy:
    def test_constant_map(self, mesh):
        assert discrete_energy(mesh, np.tile(hb.origin(2), (mesh.n_vertices, 1))) == 0.0

    def test_identity_is_twice_area(self):
        m = build_polar_mesh(R=2.0, h_mesh=0.05)
        area = 2 * np.pi * (np.cosh(2.0) - 1)
        assert discrete_energy(m, m.vertices) == pytest.approx(2 * area, rel=0.05)

    def test_solution_beats_harmonic_guess(self, mesh, shear_solution):
        f, data, hmap, _ = shear_solution
        guess = harmonic_extension(mesh, data)
        assert discrete_energy(mesh, hmap) <= discrete_energy(mesh, guess)
        assert discrete_energy(mesh, hmap) <= discrete_energy(mesh, initial_values(mesh, data, f))


class TestScalar:
    def test_maximum_principle(self, mesh):
        rng = np.random.default_rng(5)
        b = rng.standard_normal(mesh.boundary.sum())
        u = solve_scalar_dirichlet(mesh, b)
        assert u[~mesh.boundary].min() >= b.min() - 1e-12
        assert u[~mesh.boundary].max() <= b.max() + 1e-12
        assert np.max(np.abs(discrete_laplacian(mesh, u)[~mesh.boundary])) < 1e-9

    def test_harmonic_extension_on_hyperboloid(self, mesh):
        data = restrict_boundary(make_horocyclic_shear(1.0), mesh)
        v = harmonic_extension(mesh, data)
        assert np.allclose(hb.mdot(v, v), -1.0, atol=1e-9)


class TestSubharmonicity:
    def test_distance_to_fixed_points(self, mesh, shear_solution):
        *_, hmap, _ = shear_solution
        rng = np.random.default_rng(8)
        inner = ~mesh.boundary
        for y0 in hb.sample_points(rng, 5, 2, 4.0):
            u = hb.distance(hmap.values, np.broadcast_to(y0, hmap.values.shape))
            assert discrete_laplacian(mesh, u)[inner].min() >= -0.1


class TestInterpolate:
    def test_at_vertex(self, mesh, shear_solution):
        *_, hmap, _ = shear_solution
        for i in (0, 17, 500, mesh.n_vertices - 1):
            y = interpolate(mesh, hmap, HPoint(mesh.vertices[i]))
            assert hb.distance(y.coords, hmap.values[i]) < 1e-9

    def test_edge_midpoint_of_identity(self, mesh):
        f = make_isometry(2, 0.5, (0.2,))
        hmap, _ = solve_dirichlet(mesh, restrict_boundary(f, mesh), f=f)
        e = mesh.edges[::97]
        mid = hb.geodesic(mesh.vertices[e[:, 0]], mesh.vertices[e[:, 1]], 0.5)
        got = interpolate(mesh, hmap, mid)
        want = hb.geodesic(hmap.values[e[:, 0]], hmap.values[e[:, 1]], 0.5)
        assert np.max(hb.distance(got, want)) < 1e-6

    def test_identity_interpolates_exactly(self, mesh):
        from qiharmonic.solver import DiscreteMap

        hmap = DiscreteMap(mesh, mesh.vertices.copy())
        pts = hb.sample_points(np.random.default_rng(1), 200, 2, 1.9)
        assert np.max(hb.distance(interpolate(mesh, hmap, pts), pts)) < 1e-10

    def test_outside(self, mesh, shear_solution):
        *_, hmap, _ = shear_solution
        with pytest.raises(GeometryError, match="outside"):
            interpolate(mesh, hmap, hb.sample_points(np.random.default_rng(0), 1, 2, 0.1)[0] * 0 + np.array([np.cosh(3.0), np.sinh(3.0), 0.0]))


class TestDump:
    def test_round_trip(self, tmp_path, mesh, shear_solution):
        *_, hmap, _ = shear_solution
        path = tmp_path / "sol.csv"
        save_solution(hmap, path)
        assert path.read_text().splitlines()[0] == "vertex,x0,x1,x2"
        back = load_solution(path, mesh)
        assert np.array_equal(back.values, hmap.values)
        assert dumps_solution(back) == dumps_solution(hmap)

    def test_wrong_mesh(self, tmp_path, small, shear_solution):
        *_, hmap, _ = shear_solution
        path = tmp_path / "sol.csv"
        save_solution(hmap, path)
        with pytest.raises(GeometryError):
            load_solution(path, small)
