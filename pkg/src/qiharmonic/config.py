"""Experiment configuration: versioned JSON with field-level diagnostics."""

from __future__ import annotations

import hashlib
import json
import os
import re
from dataclasses import asdict, dataclass, field

from .errors import ConfigError
from .mesh import DEFAULT_VERTEX_CAP
from .qimaps import GENERATORS

SCHEMA_VERSION = 1
CHECKS = ("boundary", "subharmonicity", "cheng", "gauss", "window", "study")
PROFILES = ("standard", "flat")
MIN_R, MIN_H, MAX_H = 1.0, 0.01, 0.5
ENV_PREFIX = "QIH_"
ENV_KEYS = ("CONFIG", "OUT", "THREADS", "SEED", "CACHE")

_TOP = {"schema_version", "map", "smoothing", "mesh", "target_dim", "checks", "seed", "certify", "solver",
        "study", "window", "output"}


@dataclass(frozen=True)
class ExperimentConfig:
    map: dict
    radii: tuple
    h_mesh: float = 0.1
    cap: int = DEFAULT_VERTEX_CAP
    target_dim: int = 2
    smoothing: bool = True
    profile: str = "standard"
    quadrature: tuple = (8, 16)
    checks: tuple = ("boundary", "subharmonicity", "cheng", "gauss", "window")
    seed: int = 0
    n_pairs: int = 1024
    n_points: int = 128
    certify_radius: float = 5.0
    tol: float | None = None
    max_sweeps: int | None = None
    study_S: float = 2.0
    window_samples: int = 256
    n_y0: int = 5
    n_probes: int = 100
    output: str = "out"
    extra: dict = field(default_factory=dict, compare=False)

    @property
    def R(self):
        """Radius of single-ball runs: the largest configured radius."""
        return self.radii[-1]

    def map_spec(self):
        spec = dict(self.map)
        if self.target_dim != 2:
            spec["target_dim"] = self.target_dim
        if not self.smoothing:
            return spec
        return {"generator": "smoothed", "inner": spec, "profile": self.profile,
                "n_radial": self.quadrature[0], "n_angular": self.quadrature[1]}

    def canonical(self):
        """Everything that affects results (the output location does not)."""
        d = asdict(self)
        d.pop("output")
        d.pop("extra")
        d["schema_version"] = SCHEMA_VERSION
        return d

    def hash(self):
        blob = json.dumps(self.canonical(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def with_overrides(self, **kw):
        d = {k: v for k, v in asdict(self).items()}
        d.update({k: v for k, v in kw.items() if v is not None})
        return ExperimentConfig(**d)


def _line_of(text, key):
    """1-based line of the first occurrence of ``"key"`` in the JSON text, or None."""
    if text is None:
        return None
    m = re.search(r'"%s"\s*:' % re.escape(key), text)
    return text.count("\n", 0, m.start()) + 1 if m else None


class _Reader:
    def __init__(self, text, source):
        self.text, self.source = text, source

    def fail(self, path, msg):
        key = path.split(".")[-1].split("[")[0]
        line = _line_of(self.text, key)
        where = f"{self.source}:{line}" if line else self.source
        raise ConfigError(f"{where}: field '{path}': {msg}")

    def number(self, d, key, path, default=None, lo=None, hi=None, integer=False, required=False):
        if key not in d:
            if required:
                self.fail(path, "is required")
            return default
        v = d[key]
        if v is None:
            return None
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            self.fail(path, f"expected a number, got {v!r}")
        if integer and (not float(v).is_integer()):
            self.fail(path, f"expected an integer, got {v!r}")
        if lo is not None and v < lo:
            self.fail(path, f"must be >= {lo}, got {v}")
        if hi is not None and v > hi:
            self.fail(path, f"must be <= {hi}, got {v}")
        return int(v) if integer else float(v)

    def section(self, d, key):
        v = d.get(key, {})
        if not isinstance(v, dict):
            self.fail(key, "expected an object")
        return v


def parse_config(data, text=None, source="<config>") -> ExperimentConfig:
    """Validate a decoded config document; ``text`` (if given) locates errors by line."""
    rd = _Reader(text, source)
    if not isinstance(data, dict):
        raise ConfigError(f"{source}: top level must be an object")
    unknown = sorted(set(data) - _TOP)
    if unknown:
        rd.fail(unknown[0], f"unknown field (known: {sorted(_TOP)})")
    version = data.get("schema_version")
    if version != SCHEMA_VERSION:
        rd.fail("schema_version", f"expected {SCHEMA_VERSION}, got {version!r}")

    m = data.get("map")
    if not isinstance(m, dict) or "generator" not in m:
        rd.fail("map", "expected an object with a 'generator'")
    if m["generator"] not in GENERATORS:
        rd.fail("map.generator", f"unknown generator {m['generator']!r}; known: {list(GENERATORS)}")
    if m["generator"] == "shear":
        rd.number(m, "lam", "map.lam", required=True)
    if m["generator"] == "perturbed_isometry":
        rd.number(m, "amplitude", "map.amplitude", lo=0.0, required=True)
        rd.number(m, "omega", "map.omega", lo=0.0, required=True)

    sm = rd.section(data, "smoothing")
    smoothing = sm.get("enabled", True)
    if not isinstance(smoothing, bool):
        rd.fail("smoothing.enabled", "expected true or false")
    profile = sm.get("profile", "standard")
    if profile not in PROFILES:
        rd.fail("smoothing.profile", f"unknown bump profile {profile!r}; known: {list(PROFILES)}")
    quad = (rd.number(sm, "n_radial", "smoothing.n_radial", 8, 1, integer=True),
            rd.number(sm, "n_angular", "smoothing.n_angular", 16, 1, integer=True))

    ms = rd.section(data, "mesh")
    if "R" in ms and "radii" in ms:
        rd.fail("mesh.radii", "give either 'R' or 'radii', not both")
    if "radii" in ms:
        radii = ms["radii"]
        if not isinstance(radii, list) or not radii:
            rd.fail("mesh.radii", "expected a nonempty list")
        radii = [rd.number({"radii": r}, "radii", f"mesh.radii[{i}]", lo=MIN_R, required=True)
                 for i, r in enumerate(radii)]
        if any(b <= a for a, b in zip(radii, radii[1:])):
            rd.fail("mesh.radii", f"radii must be strictly increasing, got {radii}")
    else:
        radii = [rd.number(ms, "R", "mesh.R", 4.0, MIN_R)]
    h = rd.number(ms, "h_mesh", "mesh.h_mesh", 0.1, MIN_H, MAX_H)
    cap = rd.number(ms, "cap", "mesh.cap", DEFAULT_VERTEX_CAP, 1, integer=True)

    target_dim = rd.number(data, "target_dim", "target_dim", 2, 2, 3, integer=True)

    checks = data.get("checks", list(ExperimentConfig.checks))
    if not isinstance(checks, list):
        rd.fail("checks", "expected a list")
    for c in checks:
        if c not in CHECKS:
            rd.fail("checks", f"unknown check {c!r}; known: {list(CHECKS)}")

    seed = rd.number(data, "seed", "seed", 0, 0, 2 ** 64 - 1, integer=True)
    ce = rd.section(data, "certify")
    sv = rd.section(data, "solver")
    st = rd.section(data, "study")
    wi = rd.section(data, "window")
    S = rd.number(st, "S", "study.S", 2.0, 0.0)
    if S > radii[0]:
        rd.fail("study.S", f"comparison radius {S} exceeds the smallest radius {radii[0]}")
    out = data.get("output", "out")
    if not isinstance(out, str):
        rd.fail("output", "expected a path string")
    return ExperimentConfig(
        map=dict(m), radii=tuple(radii), h_mesh=h, cap=cap, target_dim=target_dim, smoothing=smoothing,
        profile=profile, quadrature=quad, checks=tuple(dict.fromkeys(checks)), seed=seed,
        n_pairs=rd.number(ce, "n_pairs", "certify.n_pairs", 1024, 2, integer=True),
        n_points=rd.number(ce, "n_points", "certify.n_points", 128, 1, integer=True),
        certify_radius=rd.number(ce, "radius", "certify.radius", 5.0, 0.1),
        tol=rd.number(sv, "tol", "solver.tol", None, 0.0),
        max_sweeps=rd.number(sv, "max_sweeps", "solver.max_sweeps", None, 1, integer=True),
        study_S=S,
        window_samples=rd.number(wi, "samples", "window.samples", 256, 2, integer=True),
        n_y0=rd.number(wi, "n_y0", "window.n_y0", 5, 1, integer=True),
        n_probes=rd.number(wi, "n_probes", "window.n_probes", 100, 1, integer=True), output=out, extra={"source": source})


def loads_config(text, source="<config>") -> ExperimentConfig:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"{source}:{e.lineno}:{e.colno}: invalid JSON: {e.msg}") from None
    return parse_config(data, text, source)


def load_config(path) -> ExperimentConfig:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e.strerror}") from None
    return loads_config(text, str(path))


def env_overrides(environ=None):
    """QIH_* variables as typed values (unset variables are omitted)."""
    env = os.environ if environ is None else environ
    out = {}
    for key in ENV_KEYS:
        v = env.get(ENV_PREFIX + key)
        if v is None or v == "":
            continue
        if key in ("THREADS", "SEED"):
            try:
                out[key.lower()] = int(v)
            except ValueError:
                raise ConfigError(f"{ENV_PREFIX}{key} must be an integer, got {v!r}") from None
        else:
            out[key.lower()] = v
    return out
