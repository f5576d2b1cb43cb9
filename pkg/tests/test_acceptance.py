"""Acceptance criteria 1-10, each reported as one pass/fail line."""

import math
import time

import numpy as np
import pytest

from qiharmonic import harness as H
from qiharmonic import qimaps as Q
from qiharmonic.comparison import angle_lemma_batch, check_hessian_dist, plane_triangle_angle
from qiharmonic.errors import NotApplicable
from qiharmonic.geometry import HPoint, TangentVector
from qiharmonic.geometry import hyperboloid as hb
from qiharmonic.mesh import build_polar_mesh
from qiharmonic.qimaps import gromov_products

pytestmark = pytest.mark.slow

# coth(1), 30-digit mpmath
COTH_1 = 1.3130352854993313
PIPELINE_RADII = (3.0, 4.0, 5.0)
PIPELINE_H = 0.1
STUDY_RADII = (3.0, 4.0, 5.0, 6.0)
STUDY_H = 0.2
N_Y0 = 5


def random_tangent(rng, p, max_len):
    c = rng.standard_normal((len(p), p.shape[1] - 1))
    c *= (max_len * rng.random(len(p)) / np.linalg.norm(c, axis=1))[:, None]
    return c


# --- shared pipeline runs -----------------------------------------------------------

@pytest.fixture(scope="session")
def smoothed_maps():
    out = {}
    for name, f in (("shear", Q.make_horocyclic_shear(1.0)),
                    ("perturbed", Q.make_perturbed_isometry(Q.make_isometry(2), 0.3, 1.0))):
        g = Q.smooth(f, quadrature=Q.PolarQuadrature(8, 16))
        out[name], _ = Q.certify(g, seed=0, n_pairs=1024, n_points=128)
    return out


@pytest.fixture(scope="session")
def pipelines(smoothed_maps):
    runs = {}
    for R in PIPELINE_RADII:
        mesh = build_polar_mesh(R=R, h_mesh=PIPELINE_H)
        cal = H.calibrate_mesh(mesh)
        for name, f in smoothed_maps.items():
            hmap, rep, fv = H.solve_map(f, mesh)
            runs[name, R] = dict(f=f, mesh=mesh, cal=cal, hmap=hmap, rep=rep, fv=fv,
                                 rec=H.sup_distance(hmap, fv))
    return runs


# --- criteria -------------------------------------------------------------------------

def test_criterion_01_geometry_kernel(verdict):
    t0 = time.perf_counter()
    rng = np.random.default_rng(1)
    n = 100_000
    worst_tan = worst_pt = worst_gromov = 0.0
    for dim in (2, 3):
        p = hb.sample_points(rng, n, dim, 5.0)
        c = random_tangent(rng, p, 20.0)
        q = hb.expmap(p, hb.from_frame(p, c))
        back = hb.to_frame(p, hb.logmap(p, q))
        worst_tan = max(worst_tan, float(np.max(np.abs(back - c))))
        q2 = hb.expmap(p, hb.logmap(p, q))
        worst_pt = max(worst_pt, float(np.max(np.abs(q2 - q) / np.abs(q).max(axis=1, keepdims=True))))
        x0, x1, x2 = (hb.sample_points(rng, n, dim, 10.0) for _ in range(3))
        d01 = hb.distance(x0, x1)
        ident = gromov_products(x0, x1, x2) + gromov_products(x1, x0, x2) - d01
        worst_gromov = max(worst_gromov, float(np.max(np.abs(ident))))
    elapsed = time.perf_counter() - t0
    ok = worst_tan <= 1e-9 and worst_pt <= 1e-9 and worst_gromov <= 1e-12 and elapsed < 10
    verdict(1, ok, f"tangent {worst_tan:.1e}, point (relative) {worst_pt:.1e}, Gromov {worst_gromov:.1e}, "
                   f"{elapsed:.1f} s")
    assert ok


def test_criterion_02_comparison_suite(verdict):
    t0 = time.perf_counter()
    rng = np.random.default_rng(2)
    n = 100_000
    x = [hb.sample_points(rng, n, 2, 12.0) for _ in range(3)]
    res = angle_lemma_batch(*x)
    a, b = res.passed("a"), res.passed("b")
    c_ok = res.passed("c")[res.c_applicable]
    l0, l1, l2 = hb.distance(x[1], x[2]), hb.distance(x[0], x[1]), hb.distance(x[0], x[2])
    gap = np.abs(plane_triangle_angle(l0, l1, l2) - res.theta)
    elapsed = time.perf_counter() - t0
    ok = a.all() and b.all() and c_ok.all() and len(c_ok) > 0 and gap.max() <= 1e-8 and elapsed < 30
    verdict(2, ok, f"a {a.mean():.0%}, b {b.mean():.0%}, c {c_ok.mean():.0%} of {len(c_ok)} applicable, "
                   f"angle gap {gap.max():.1e}, {elapsed:.1f} s")
    assert ok


def test_criterion_03_hessian(verdict):
    x0 = HPoint.origin(2)
    x = HPoint(np.array([math.cosh(1.0), math.sinh(1.0) * math.cos(0.7), math.sinh(1.0) * math.sin(0.7)]))
    trans = check_hessian_dist(x0, x).dist_lower.bound
    rng = np.random.default_rng(3)
    worst = math.inf
    for _ in range(1000):
        p, q = (HPoint(y) for y in hb.sample_points(rng, 2, 2, 4.0))
        u = TangentVector(q, hb.from_frame(q.coords, rng.standard_normal(2)))
        worst = min(worst, check_hessian_dist(p, q, direction=u).square.bound)
    ok = abs(trans - COTH_1) <= 1e-4 and worst >= 2 - 1e-4
    verdict(3, ok, f"transverse D2 d at distance 1 = {trans:.6f} (coth 1 = {COTH_1:.6f}), min D2 d^2 = {worst:.6f}")
    assert ok


def test_criterion_04_smoothing(verdict):
    rng = np.random.default_rng(4)
    x = hb.sample_points(rng, 1000, 2, 5.0)
    f = Q.make_horocyclic_shear(1.0)
    gap = hb.distance(Q.smooth(f)(x), f(x))
    iso = Q.make_isometry(2, translation=[1.0, 0.5], angles=[0.3])
    iso_err = np.max(hb.distance(Q.smooth(iso)(x[:300]), iso(x[:300])))
    g = Q.Isometry(Q.isometry_matrix(2, [2.0, -1.0], [0.8]))
    eq = np.max(hb.distance(Q.smooth(Q.compose_with_isometry(g, f))(x[:300]), g(Q.smooth(f)(x[:300]))))
    ok = gap.max() <= 2 * f.c and iso_err <= 1e-6 and eq <= 1e-6
    verdict(4, ok, f"max d(f, f~) = {gap.max():.3f} <= 2c = {2 * f.c:.3f}, isometry {iso_err:.1e}, "
                   f"equivariance {eq:.1e}")
    assert ok


def test_criterion_05_solver(verdict):
    errs, details = [], []
    for h in (0.1, 0.05):
        mesh = build_polar_mesh(R=4.0, h_mesh=h)
        t0 = time.perf_counter()
        cal = H.calibrate_mesh(mesh)
        elapsed = time.perf_counter() - t0
        errs.append(cal.iso_error)
    f = Q.make_isometry(2, translation=[0.8], angles=[0.4])
    hmap, rep, fv = H.solve_map(f, mesh)
    err = float(np.max(hb.distance(hmap.values, fv)))
    ratio = errs[0] / errs[1]
    ok = (err <= cal.eps_mesh <= 0.02 and rep.converged and rep.energy_monotone() and 1.5 <= ratio <= 4
          and elapsed < 300)
    verdict(5, ok, f"R=4 h=0.05 ({mesh.n_vertices} vertices): isometry error {err:.2e} <= eps_mesh "
                   f"{cal.eps_mesh:.2e}, energy monotone {rep.energy_monotone()}, refinement ratio {ratio:.2f}, "
                   f"solve {elapsed:.0f} s")
    assert ok


def test_criterion_06_boundary_estimate(pipelines, verdict):
    bad, margins = 0, []
    for (name, R), run in sorted(pipelines.items()):
        fld = H.check_boundary_estimate(run["hmap"], run["fv"], run["f"].c, 1.0, 2, run["cal"].eps_mesh)
        bad += fld.violations
        margins.append(float(fld.margins[~run["mesh"].boundary].min()))
    ok = bad == 0
    verdict(6, ok, f"{bad} violations over {len(pipelines)} solves; smallest interior margin {min(margins):.3f}")
    assert ok


def test_criterion_07_subharmonicity(pipelines, verdict):
    rng = np.random.default_rng(7)
    worst, bad = math.inf, 0
    for (name, R), run in sorted(pipelines.items()):
        for y0 in hb.sample_points(rng, N_Y0, 2, R + 2.0):
            fld = H.check_subharmonicity(run["hmap"], y0, run["cal"].eps_mesh)
            bad += fld.violations
            worst = min(worst, float(fld.measured.min()))
    ok = bad == 0
    verdict(7, ok, f"{bad} violations; min discrete Laplacian {worst:.4f} over {N_Y0} y0 per solve")
    assert ok


def test_criterion_08_cheng(pipelines, verdict):
    bad, margin, probes = 0, math.inf, 0
    for (name, R), run in sorted(pipelines.items()):
        hmap = run["hmap"]
        dh = H.vertex_dh_norms(hmap)
        for p in H.cheng_probes(run["mesh"], 1.0, 100):
            chk = H.check_cheng(hmap, int(p), dh=dh)
            bad += not chk.passed
            margin = min(margin, chk.margin)
            probes += 1
    ok = bad == 0
    verdict(8, ok, f"{bad} violations at {probes} probes; smallest margin {margin:.1f}")
    assert ok


def test_criterion_09_window(pipelines, verdict):
    rho, c = 200.0, 1.0
    O = hb.origin(2)
    v_R = np.array([1.0, 0.0])
    r = H.window_radius(rho, c)
    rec = H.SupDistanceRecord(rho, 0, O, O, H.polar_point(O, rho, v_R), v_R, r + 2.0)

    def aligned(x):
        return hb.distance(x, np.broadcast_to(O, x.shape)), np.broadcast_to(v_R, x.shape[:-1] + (2,))

    def constant(x):
        return np.full(x.shape[:-1], rho), np.broadcast_to(v_R, x.shape[:-1] + (2,))

    def dip(x):
        t = hb.distance(x, np.broadcast_to(O, x.shape))
        upper = np.mod(np.arctan2(x[..., 2], x[..., 1]), 2 * np.pi) < np.pi
        return np.where(upper & (np.abs(t - r / 2) < r / 4), rho / 4, rho), constant(x)[1]

    inp = H.WindowInput(constant, aligned, O, r + 2.0, 0.1)
    sets = H.polar_window(inp, rec, c)
    res = H.check_window_lemmas(sets, inp, rec, c)
    slack = res.checks[0].margins
    angles = max(float(np.max(f.measured)) for f in res.checks if f.context.startswith("(iv)"))
    dsets = H.polar_window(H.WindowInput(dip, aligned, O, r + 2.0, 0.1), rec, c)
    synthetic_ok = (abs(sets.sigma_W - 1) <= sets.sampling_error and np.allclose(slack, c * r) and angles < 1e-12
                    and all(f.passed for f in res.checks) and abs(dsets.sigma_V - 0.5) <= dsets.sampling_error)

    statuses = []
    for (name, R), run in sorted(pipelines.items()):
        inp = H.WindowInput.from_solution(run["hmap"], run["f"], run["rec"])
        try:
            s = H.polar_window(inp, run["rec"], run["f"].c)
        except NotApplicable:
            statuses.append("not_applicable")
            continue
        out = H.check_window_lemmas(s, inp, run["rec"], run["f"].c, eps_mesh=run["cal"].eps_mesh)
        statuses.append("pass" if all(f.passed for f in out.checks) else "fail")
    ok = synthetic_ok and "fail" not in statuses
    verdict(9, ok, f"synthetic sigma_W {sets.sigma_W:.2f}, slack (i) = c r_R, dip sigma_V {dsets.sigma_V:.3f} "
                   f"+- {dsets.sampling_error:.3f}; pipeline windows: "
                   f"{statuses.count('not_applicable')} not applicable, {statuses.count('pass')} pass")
    assert ok


def test_criterion_10_convergence_study(smoothed_maps, verdict):
    eps = H.calibrate_mesh(build_polar_mesh(R=STUDY_RADII[0], h_mesh=STUDY_H)).eps_mesh
    parts, ok = [], True
    for name, f in sorted(smoothed_maps.items()):
        study = H.convergence_study(f, STUDY_RADII, S=2.0, h_mesh=STUDY_H, eps_mesh=eps)
        ok &= (not study.unbounded_growth) and study.diffs_decreasing
        parts.append(f"{name} rho_R {np.round(study.rhos, 3).tolist()} diffs {np.round(study.diffs, 3).tolist()}")
    verdict(10, ok, "; ".join(parts))
    assert ok
