"""Command line driver: mesh, gen-map, solve, verify, study and run."""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from . import harness as H
from .comparison import BoundCheck
from .config import ExperimentConfig, env_overrides, load_config
from .errors import ConfigError, GeometryError, MeshCapExceeded, NotApplicable
from .geometry import hyperboloid as hb
from .mesh import cached_polar_mesh
from .qimaps import build_map, certify
from .report import EstimateReport, atomic_write_text
from .solver import BoundaryData, load_solution, save_solution

MAP_FORMAT = "qiharmonic-map"
MAP_VERSION = 1
EXACT_GENERATORS = ("identity", "isometry")
BOUNDARY_DATA_TOL = 1e-12


# --- settings ------------------------------------------------------------------

class Settings:
    """Resolved run settings: command line flags > QIH_* environment > config file."""

    def __init__(self, args, environ=None):
        env = env_overrides(environ)
        path = args.config or env.get("config")
        if not path:
            raise ConfigError("no config given (use --config or QIH_CONFIG)")
        cfg = load_config(path)
        self.out = Path(_first(args.out, env.get("out"), cfg.output))
        seed = _first(args.seed, env.get("seed"), cfg.seed)
        if not 0 <= seed < 2 ** 64:
            raise ConfigError(f"seed must be an unsigned 64-bit integer, got {seed}")
        self.cfg: ExperimentConfig = cfg.with_overrides(seed=seed, output=str(self.out))
        threads = _first(args.threads, env.get("threads"), 1)
        if threads < 0:
            raise ConfigError(f"threads must be >= 0, got {threads}")
        self.threads = threads or os.cpu_count() or 1
        cache = _first(args.cache, env.get("cache"), None)
        self.cache = Path(cache) if cache else None


def _first(*values):
    for v in values:
        if v is not None:
            return v
    return None


# --- steps -----------------------------------------------------------------------

def make_map(cfg: ExperimentConfig):
    """Build and certify the configured map; returns (map with certified c, map document)."""
    f = build_map(cfg.map_spec())
    f, cert = certify(f, seed=cfg.seed, radius=cfg.certify_radius, n_pairs=cfg.n_pairs, n_points=cfg.n_points)
    doc = {"format": MAP_FORMAT, "version": MAP_VERSION, "spec": f.spec, "certification": cert.as_dict()}
    if cfg.map["generator"] in EXACT_GENERATORS and not cfg.smoothing:
        # isometries have c = 1 exactly; the sampled certificate is kept for the record
        f = f.with_constants(c=1.0, additive=0.0)
        doc["exact"] = True
    doc["c"], doc["additive"] = f.c, f.additive
    return f, doc


def map_from_doc(doc):
    if doc.get("format") != MAP_FORMAT or doc.get("version") != MAP_VERSION:
        raise ConfigError("not a qiharmonic map file")
    return build_map(doc["spec"]).with_constants(c=doc["c"], additive=doc["additive"])


def load_map_file(path):
    with open(path) as fh:
        doc = json.load(fh)
    return map_from_doc(doc), doc


def get_mesh(st: Settings, R):
    cfg = st.cfg
    return cached_polar_mesh(st.cache, None, R, cfg.h_mesh, cfg.cap)


def solve_step(st: Settings, f, mesh):
    cfg = st.cfg
    hmap, rep, _ = H.solve_map(f, mesh, tol=cfg.tol, max_sweeps=cfg.max_sweeps, threads=st.threads)
    return hmap, rep


def _meta(cfg: ExperimentConfig, mesh, map_doc, kind):
    return {"kind": kind, "tool": "qiharmonic", "version": __version__, "config_hash": cfg.hash(),
            "config": cfg.canonical(), "mesh_hash": mesh.hash() if mesh is not None else None,
            "map": {"spec": map_doc["spec"], "c": map_doc["c"], "additive": map_doc["additive"]}}


def verify_report(cfg: ExperimentConfig, f, map_doc, mesh, hmap) -> EstimateReport:
    """All configured checks on one solved map; a pure function of its inputs."""
    rep = EstimateReport(meta=_meta(cfg, mesh, map_doc, "verify"))
    fv = H.map_on_mesh(f, mesh)
    data = BoundaryData(mesh.boundary_indices, fv[mesh.boundary_indices])
    rep.add_check(BoundCheck(hmap.boundary_error(data), 0.0, "boundary data of the dump equals f on the sphere",
                             tol_analytic=BOUNDARY_DATA_TOL, samples=len(data.indices)))
    cal = H.calibrate_mesh(mesh)
    rep.meta["calibration"] = cal.as_dict()
    rec = H.sup_distance(hmap, fv)
    rep.add_table("sup_distance", rec.as_dict())
    rep.add_observed("rho_R = max d(h, f)", rec.rho, f"at vertex {rec.index}")
    c, k = f.c, mesh.vertices.shape[1] - 1
    checks = cfg.checks
    if "boundary" in checks:
        rep.add_field(H.check_boundary_estimate(hmap, fv, c, 1.0, k, cal.eps_mesh))
    if "subharmonicity" in checks:
        rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 11]))
        for y0 in hb.sample_points(rng, cfg.n_y0, hmap.target_dim, mesh.R + 2.0):
            rep.add_field(H.check_subharmonicity(hmap, y0, cal.eps_lap))
    if "cheng" in checks:
        dh = H.vertex_dh_norms(hmap)
        probes = H.cheng_probes(mesh, 1.0, cfg.n_probes)
        worst = min((H.check_cheng(hmap, int(p), dh=dh) for p in probes), key=lambda b: b.margin)
        rep.add_check(worst, f"worst of {len(probes)} probe vertices")
    if "gauss" in checks:
        if rec.rho < H.UNDEFINED_RADIUS:
            rep.add_not_applicable("Gauss lemma pullback", "rho_R = 0: no polar frame at y_R")
        else:
            for fld in H.check_gauss_inequality(hmap, rec.y_R, mesh.h_mesh):
                rep.add_field(fld)
    if "window" in checks:
        try:
            inp = H.WindowInput.from_solution(hmap, f, rec)
            sets = H.polar_window(inp, rec, c, k, cfg.window_samples)
        except NotApplicable as e:
            rep.add_not_applicable("sphere window S(x_R, r_R)", str(e))
        else:
            res = H.check_window_lemmas(sets, inp, rec, c, k, cal.eps_mesh)
            rep.add_table("window", sets.as_dict())
            for fld in res.checks:
                rep.add_field(fld)
            for ctx, why in res.not_applicable:
                rep.add_not_applicable(ctx, why)
            rep.add_observed("diameter of {v_f(z) : z in W_R}", res.diameter)
    return rep


def study_report(st: Settings, f, map_doc) -> EstimateReport:
    cfg = st.cfg
    meshes = [get_mesh(st, R) for R in cfg.radii]
    cal = H.calibrate_mesh(meshes[0])
    study = H.convergence_study(f, cfg.radii, cfg.study_S, cfg.h_mesh, cal.eps_mesh, meshes=meshes,
                                solve_kwargs={"tol": cfg.tol, "max_sweeps": cfg.max_sweeps, "threads": st.threads})
    rep = EstimateReport(meta=_meta(cfg, None, map_doc, "study"))
    rep.meta["mesh_hashes"] = [m.hash() for m in meshes]
    rep.meta["calibration"] = cal.as_dict()
    rep.add_table("convergence", study.as_rows())
    if len(cfg.radii) < 2:
        rep.add_not_applicable("growth of rho_R", "a single radius")
    elif study.unbounded_growth:
        rep.rows.append({"context": "rho_R bounded over R", "status": "fail", "measured": float(study.rhos[-1]),
                         "note": "monotone growth beyond eps_mesh at every radius step"})
    else:
        rep.rows.append({"context": "rho_R bounded over R", "status": "pass", "measured": float(study.rhos[-1]),
                         "note": "no monotone unbounded growth"})
    if len(cfg.radii) >= 2:
        extra = study.extrapolated_rho
        rep.add_observed("sup-differences on B(O,S) decrease", float(study.diffs_decreasing),
                         "1 if successive differences decrease")
        rep.add_observed("extrapolated rho_infinity", float("nan") if extra is None else extra,
                         "geometric extrapolation of the increments")
    return rep


# --- subcommands ---------------------------------------------------------------------

def _write_json(path, doc):
    atomic_write_text(path, json.dumps(doc, indent=2, sort_keys=True) + "\n")


def cmd_mesh(st: Settings, args):
    if st.cache is None:
        st.cache = st.out / "cache"
    rows = []
    for R in st.cfg.radii:
        m = get_mesh(st, R)
        rows.append(m.header())
        print(f"R={R:g} h_mesh={st.cfg.h_mesh:g}: {m.n_vertices} vertices, hash {m.hash()[:16]}")
    _write_json(st.out / "mesh.json", {"cache": str(st.cache), "meshes": rows})
    return 0


def cmd_gen_map(st: Settings, args):
    f, doc = make_map(st.cfg)
    _write_json(st.out / "map.json", doc)
    print(f"certified c = {doc['c']:.6g}, additive = {doc['additive']:.6g}")
    return 0


def _map_for(st, args):
    if getattr(args, "map", None):
        return load_map_file(args.map)
    return make_map(st.cfg)


def cmd_solve(st: Settings, args):
    f, doc = _map_for(st, args)
    mesh = get_mesh(st, st.cfg.R)
    hmap, rep = solve_step(st, f, mesh)
    save_solution(hmap, st.out / "solution.csv")
    meta = _meta(st.cfg, mesh, doc, "solve")
    _write_json(st.out / "solve.json", {"meta": meta, "solve": rep.as_dict()})
    print(f"solved R={mesh.R:g}: {rep.sweeps} sweeps, converged={rep.converged}")
    return 0 if rep.converged else 2


def cmd_verify(st: Settings, args):
    f, doc = _map_for(st, args)
    mesh = get_mesh(st, st.cfg.R)
    hmap = load_solution(args.solution or st.out / "solution.csv", mesh)
    rep = verify_report(st.cfg, f, doc, mesh, hmap)
    rep.write(st.out, "report")
    _print_summary(rep)
    return rep.exit_code


def cmd_study(st: Settings, args):
    f, doc = _map_for(st, args)
    rep = study_report(st, f, doc)
    rep.write(st.out, "study")
    _print_summary(rep)
    return rep.exit_code


def cmd_run(st: Settings, args):
    f, doc = make_map(st.cfg)
    _write_json(st.out / "map.json", doc)
    mesh = get_mesh(st, st.cfg.R)
    hmap, srep = solve_step(st, f, mesh)
    save_solution(hmap, st.out / "solution.csv")
    _write_json(st.out / "solve.json", {"meta": _meta(st.cfg, mesh, doc, "solve"), "solve": srep.as_dict()})
    rep = verify_report(st.cfg, f, doc, mesh, hmap)
    rep.write(st.out, "report")
    _print_summary(rep)
    code = rep.exit_code
    if not srep.converged:
        print(f"solver did not converge in {srep.sweeps} sweeps", file=sys.stderr)
        code = 2
    if "study" in st.cfg.checks:
        srep_study = study_report(st, f, doc)
        srep_study.write(st.out, "study")
        _print_summary(srep_study)
        code = max(code, srep_study.exit_code)
    return code


def _print_summary(rep: EstimateReport):
    for r in rep.rows:
        val = r.get("measured")
        shown = f" {val:.4g}" if isinstance(val, float) else ""
        bound = f" vs {r['bound']:.4g}" if "bound" in r else ""
        print(f"{r['status']:>14}  {r['context']}{shown}{bound}")
    s = rep.summary()
    print(f"summary: {s['pass']} pass, {s['fail']} fail, {s['not_applicable']} not applicable, "
          f"{s['observed']} observed")


COMMANDS = {"mesh": cmd_mesh, "gen-map": cmd_gen_map, "solve": cmd_solve, "verify": cmd_verify,
            "study": cmd_study, "run": cmd_run}


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="experiment config (JSON); env QIH_CONFIG")
    common.add_argument("--out", help="output directory; env QIH_OUT")
    common.add_argument("--threads", type=int, help="worker threads, 0 = all cores; env QIH_THREADS")
    common.add_argument("--seed", type=int, help="unsigned 64-bit seed; env QIH_SEED")
    common.add_argument("--cache", help="mesh cache directory; env QIH_CACHE")
    p = argparse.ArgumentParser(prog="qiharmonic", description="Discrete harmonic maps near quasiisometries.")
    p.add_argument("--version", action="version", version=f"qiharmonic {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("mesh", parents=[common], help="build and cache the polar meshes")
    sub.add_parser("gen-map", parents=[common], help="build the map and write its certificate")
    s = sub.add_parser("solve", parents=[common], help="solve the Dirichlet problem once")
    s.add_argument("--map", help="map file from gen-map (default: rebuild from config)")
    v = sub.add_parser("verify", parents=[common], help="run the estimate checks on a solution dump")
    v.add_argument("--map", help="map file from gen-map (default: rebuild from config)")
    v.add_argument("--solution", help="solution dump (default: OUT/solution.csv)")
    t = sub.add_parser("study", parents=[common], help="convergence study over the configured radii")
    t.add_argument("--map", help="map file from gen-map (default: rebuild from config)")
    sub.add_parser("run", parents=[common], help="gen-map, solve, verify and (if configured) study")
    return p


def main(argv=None, environ=None):
    args = build_parser().parse_args(argv)
    try:
        st = Settings(args, environ)
        return COMMANDS[args.command](st, args)
    except MeshCapExceeded as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except (ConfigError, GeometryError, OSError, KeyError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
