import csv
import json

import pytest

from qiharmonic.cli import main


def write_config(path, **kw):
    d = {
        "schema_version": 1,
        "map": {"generator": "isometry", "translation": [0.5], "angles": [0.3]},
        "smoothing": {"enabled": False},
        "mesh": {"R": 2.0, "h_mesh": 0.1},
        "seed": 3,
    }
    d.update(kw)
    path.write_text(json.dumps(d, indent=2))
    return str(path)


@pytest.fixture
def cfg(tmp_path):
    return write_config(tmp_path / "iso.json")


def report(out, stem="report"):
    return json.loads((out / f"{stem}.json").read_text())


def statuses(out, stem="report"):
    with open(out / f"{stem}.csv") as fh:
        return {r["context"]: r["status"] for r in csv.DictReader(fh)}


def test_run_isometry(tmp_path, cfg):
    out = tmp_path / "o"
    assert main(["run", "--config", cfg, "--out", str(out)], environ={}) == 0
    rep = report(out)
    rho = rep["tables"]["sup_distance"]["rho_R"]
    assert rho <= rep["meta"]["calibration"]["eps_mesh"]
    assert rep["summary"]["fail"] == 0
    assert statuses(out)["sphere window S(x_R, r_R)"] == "not_applicable"
    meta = rep["meta"]
    assert len(meta["config_hash"]) == 64 and len(meta["mesh_hash"]) == 64 and meta["version"]
    for name in ("map.json", "solution.csv", "solve.json", "report.csv"):
        assert (out / name).exists()
    assert not list(out.glob("*.tmp"))


def test_pipeline_equals_monolithic(tmp_path, cfg):
    a, b, cache = tmp_path / "a", tmp_path / "b", str(tmp_path / "cache")
    assert main(["run", "--config", cfg, "--out", str(a)], environ={}) == 0
    common = ["--config", cfg, "--out", str(b), "--cache", cache]
    assert main(["mesh", *common], environ={}) == 0
    assert main(["gen-map", *common], environ={}) == 0
    assert main(["solve", *common, "--map", str(b / "map.json")], environ={}) == 0
    assert main(["verify", *common, "--map", str(b / "map.json")], environ={}) == 0
    for name in ("map.json", "solution.csv", "report.json", "report.csv"):
        assert (a / name).read_bytes() == (b / name).read_bytes(), name


def test_reports_byte_identical(tmp_path, cfg):
    for d in ("x", "y"):
        assert main(["run", "--config", cfg, "--out", str(tmp_path / d), "--threads", "2"], environ={}) == 0
    assert (tmp_path / "x/report.json").read_bytes() == (tmp_path / "y/report.json").read_bytes()
    assert (tmp_path / "x/report.csv").read_bytes() == (tmp_path / "y/report.csv").read_bytes()


def test_gen_map_isometry_has_c_one(tmp_path, cfg):
    assert main(["gen-map", "--config", cfg, "--out", str(tmp_path)], environ={}) == 0
    doc = json.loads((tmp_path / "map.json").read_text())
    assert doc["c"] == 1.0 and doc["additive"] == 0.0 and doc["exact"]
    assert doc["certification"]["c"] == pytest.approx(1.0, abs=1e-9)


def test_tampered_dump_fails_boundary_invariant(tmp_path, cfg):
    out = tmp_path / "o"
    assert main(["run", "--config", cfg, "--out", str(out)], environ={}) == 0
    rows = list(csv.reader(open(out / "solution.csv")))
    rows[-1][1] = repr(float(rows[-1][1]) * 1.001)  # last vertex lies on the boundary ring
    with open(tmp_path / "bad.csv", "w", newline="") as fh:
        csv.writer(fh).writerows(rows)
    code = main(["verify", "--config", cfg, "--out", str(tmp_path / "v"), "--solution", str(tmp_path / "bad.csv")],
                environ={})
    assert code == 2
    assert statuses(tmp_path / "v")["boundary data of the dump equals f on the sphere"] == "fail"


def test_precedence_flags_env_file(tmp_path, cfg):
    env = {"QIH_SEED": "11", "QIH_OUT": str(tmp_path / "env")}
    assert main(["gen-map", "--config", cfg], environ=env) == 0
    assert (tmp_path / "env/map.json").exists()
    assert main(["run", "--config", cfg, "--seed", "5", "--out", str(tmp_path / "flag")], environ=env) == 0
    assert report(tmp_path / "flag")["meta"]["config"]["seed"] == 5
    assert main(["run", "--config", cfg], environ=env) == 0
    assert report(tmp_path / "env")["meta"]["config"]["seed"] == 11
    assert main(["run"], environ={"QIH_CONFIG": cfg, "QIH_OUT": str(tmp_path / "f")}) == 0
    assert report(tmp_path / "f")["meta"]["config"]["seed"] == 3


def test_invalid_config_exit_one(tmp_path, capsys):
    bad = write_config(tmp_path / "bad.json", mesh={"R": 0.5})
    assert main(["run", "--config", bad, "--out", str(tmp_path)], environ={}) == 1
    err = capsys.readouterr().err
    assert "bad.json:" in err and "mesh.R" in err


def test_mesh_cap_message(tmp_path, capsys):
    c = write_config(tmp_path / "c.json", mesh={"R": 2.0, "h_mesh": 0.1, "cap": 100})
    assert main(["mesh", "--config", c, "--out", str(tmp_path)], environ={}) == 1
    assert "h_mesh" in capsys.readouterr().err


def test_missing_config(capsys):
    assert main(["run"], environ={}) == 1
    assert "QIH_CONFIG" in capsys.readouterr().err


def test_study(tmp_path):
    c = write_config(tmp_path / "s.json", mesh={"radii": [2.0, 3.0], "h_mesh": 0.2}, checks=["study"])
    assert main(["study", "--config", c, "--out", str(tmp_path)], environ={}) == 0
    rep = report(tmp_path, "study")
    assert [r["R"] for r in rep["tables"]["convergence"]] == [2.0, 3.0]
    assert statuses(tmp_path, "study")["rho_R bounded over R"] == "pass"
    assert len(rep["meta"]["mesh_hashes"]) == 2
