"""TOML experiment configuration.

Every key is optional; an empty file gives the default two-dimensional
Riemannian experiment on the unit square.  Layout::

    seed = 0
    backend = "numba"            # or "numpy"; the environment variable wins when unset

    [domain]
    L = 1.0                      # [0, L]^dim, or bounds = [[x0, x1], [y0, y1]]
    dim = 2
    nx = 64                      # single-grid runs
    grids = [64, 96, 128]        # convergence runs, strictly refining

    [time]
    T = 1.0
    cfl_factor = 0.5

    [source]
    family = "burst"             # or "zero"
    face = "x-"
    center = [0.5]               # tangential coordinates on the face
    width = 0.2
    direction = [1.0, 0.5]
    frequency = 4.0
    cycles = 2.0
    amplitude = 1.0

    [material]
    rho = {family = "linear", value = 1.0, gradient = [0.2, 0.1]}   # or a number
    c = {family = "isotropic", lambda = 2.0, mu = 1.0}
    g = {family = "euclidean"}

    [[gauge.cases]]
    name = "combined"
    phi = {family = "bump_displacement", amplitude = 0.05, direction = [1.0, 1.0]}
    mu = {family = "bump", amplitude = 0.5, center = [0.5, 0.5], radius = 0.4}

    [scaling]
    mu_constant = 4.0
    nx = 64
    mu_varying = {family = "bump", amplitude = 0.5, center = [1.0, 0.5], radius = 0.4}

    [checks]
    include = ["scaling", "invariance", "forms", "christoffel"]
    points = 64

    [qp]
    lambda = 2.0
    mu = 1.0
    rho = 1.0
    directions = 16

    [convergence]
    self_grids = [33, 65, 129, 257]
    nx_energy = 128
    T = 0.8                      # self-convergence horizon

    [perturbation]
    amplitude = 0.1
    nx = 128
    center = [0.5, 0.5]
    radius = 0.25

    [preset]
    name = "table1.full-riemannian"

Scalar families: constant, linear, exp_linear, trig, bump.  Stiffness
families: isotropic, voigt, isotropic_gradient, rotated_orthotropic.  Metric
families: euclidean, constant, conformal_exp, warped, flat_pullback, trig.
Map families: identity, bump_displacement, linear_conformal, affine,
holomorphic_sample, exp_conformal.  ``collar_width`` of a bump map defaults to
four cells of the coarsest grid.
"""

import hashlib
import json
import sys
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

from . import families as fam
from .dn_map import GaugeSpec
from .errors import ConfigError
from .geometry import GaugeFactor, builtin_diffeo
from .solver.grid import Grid
from .solver.ibvp import BurstSource, ZeroSource
from .tensor_core import MaterialTriple

KINDS = ("check-operators", "run-dn", "compare-gauge", "scaling-check", "qp-speed",
         "convergence", "table1-preset")
CHECKS = ("scaling", "invariance", "forms", "christoffel")

DEFAULT_MATERIAL = {
    "rho": {"family": "linear", "value": 1.0, "gradient": [0.2, 0.1]},
    "c": {"family": "isotropic_gradient", "lambda": 2.0, "mu": 1.0,
          "grad_lambda": [0.3, 0.1], "grad_mu": [0.1, -0.2]},
    "g": {"family": "conformal_exp", "rate": [0.2, 0.1]},
}

_SECTIONS = {
    "seed": None, "backend": None, "domain": {"L", "dim", "bounds", "nx", "grids"},
    "time": {"T", "cfl_factor"},
    "source": {"family", "face", "center", "width", "direction", "frequency", "cycles", "amplitude"},
    "material": {"rho", "c", "g"}, "gauge": {"cases"},
    "scaling": {"mu_constant", "nx", "mu_varying"}, "checks": {"include", "points"},
    "qp": {"lambda", "mu", "rho", "directions"},
    "convergence": {"self_grids", "nx_energy", "T"},
    "perturbation": {"amplitude", "nx", "center", "radius"}, "preset": {"name"},
}


@dataclass
class ExperimentSpec:
    kind: Optional[str]
    seed: int
    backend: Optional[str]
    domain: np.ndarray
    nx: int
    grids: list
    T: float
    cfl: float
    source: object
    triple: MaterialTriple
    gauge_cases: dict
    scaling: dict
    checks: dict
    qp: dict
    convergence: dict
    perturbation: Optional[dict]
    preset: Optional[str]
    raw: dict = field(default_factory=dict)
    config_hash: str = ""

    @property
    def n(self):
        return self.domain.shape[0]

    @property
    def collar(self):
        """Four cells of the coarsest grid."""
        return 4.0 * Grid(self.domain, self.grids[0]).h_min


def _table(raw, key):
    val = raw.get(key, {})
    if not isinstance(val, dict):
        raise ConfigError("expected a table", key)
    allowed = _SECTIONS[key]
    for k in val:
        if k not in allowed:
            raise ConfigError("unknown key", f"{key}.{k}")
    return val


def _number(val, path, positive=False, integer=False):
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        raise ConfigError(f"expected a number, got {val!r}", path)
    if integer and not isinstance(val, int):
        raise ConfigError(f"expected an integer, got {val!r}", path)
    if not np.isfinite(val) or (positive and val <= 0):
        raise ConfigError(f"expected a positive finite value, got {val!r}", path)
    return val


def _grid_size(val, path):
    if isinstance(val, int) and not isinstance(val, bool) and val >= 5:
        return val
    raise ConfigError(f"grid size must be an integer of at least 5, got {val!r}", path)


def _domain(raw):
    d = _table(raw, "domain")
    if "bounds" in d:
        if "L" in d or "dim" in d:
            raise ConfigError("give either bounds or L/dim", "domain.bounds")
        try:
            dom = np.asarray(d["bounds"], dtype=float)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc), "domain.bounds") from exc
        if dom.ndim != 2 or dom.shape[1] != 2 or dom.shape[0] not in (2, 3) or np.any(dom[:, 1] <= dom[:, 0]):
            raise ConfigError("bounds must be 2 or 3 increasing [lo, hi] pairs", "domain.bounds")
    else:
        L = _number(d.get("L", 1.0), "domain.L", positive=True)
        dim = d.get("dim", 2)
        if dim not in (2, 3):
            raise ConfigError("dim must be 2 or 3", "domain.dim")
        dom = np.array([[0.0, float(L)]] * dim)
    nx = _grid_size(d.get("nx", 64), "domain.nx")
    grids = d.get("grids", [64, 96, 128])
    if not isinstance(grids, list) or not grids:
        raise ConfigError("expected a non-empty list", "domain.grids")
    grids = [_grid_size(g, f"domain.grids[{k}]") for k, g in enumerate(grids)]
    if any(grids[k] >= grids[k + 1] for k in range(len(grids) - 1)):
        raise ConfigError("grid sequence must be strictly refining", "domain.grids")
    return dom, nx, grids


def _material(raw, n):
    m = _table(raw, "material")
    if "material" not in raw and n == 2:
        spec = dict(DEFAULT_MATERIAL)
    else:
        spec = {"rho": {"family": "constant", "value": 1.0},
                "c": {"family": "isotropic", "lambda": 2.0, "mu": 1.0},
                "g": {"family": "euclidean"}}
        spec.update(m)
    rho = spec["rho"]
    if isinstance(rho, (int, float)) and not isinstance(rho, bool):
        rho = {"family": "constant", "value": rho}
    if not isinstance(rho, dict) or not isinstance(spec["c"], dict) or not isinstance(spec["g"], dict):
        raise ConfigError("rho, c and g must be tables", "material")
    try:
        triple = MaterialTriple(fam.build_scalar(rho, n, "material.rho"),
                                fam.build_stiffness(spec["c"], n, "material.c"),
                                fam.build_metric(spec["g"], n, "material.g"))
    except ConfigError:
        raise
    except (TypeError, ValueError, KeyError) as exc:
        raise ConfigError(str(exc), "material") from exc
    return triple


def _source(raw, domain):
    s = dict(_table(raw, "source"))
    n = domain.shape[0]
    family = s.pop("family", "burst")
    if family == "zero":
        if s:
            raise ConfigError("the zero source takes no parameters", f"source.{next(iter(s))}")
        return ZeroSource(n)
    if family != "burst":
        raise ConfigError(f"unknown source family {family!r}", "source.family")
    mid = [float(domain[a].mean()) for a in range(n)]
    face = s.get("face", "x-")
    try:
        return BurstSource(domain, face, s.get("center", mid[1:] if face[0] == "x" else mid[:1] + mid[2:]),
                           _number(s.get("width", 0.2 * float(np.min(domain[:, 1] - domain[:, 0]))),
                                   "source.width", positive=True),
                           s.get("direction", [1.0, 0.5, 0.0][:n]),
                           frequency=_number(s.get("frequency", 4.0), "source.frequency", positive=True),
                           cycles=_number(s.get("cycles", 2.0), "source.cycles", positive=True),
                           amplitude=_number(s.get("amplitude", 1.0), "source.amplitude"))
    except ConfigError:
        raise
    except (TypeError, ValueError, KeyError) as exc:
        raise ConfigError(str(exc), "source") from exc


def default_gauge_cases(domain, collar):
    n = domain.shape[0]
    center = [float(v) for v in domain.mean(axis=1)]
    radius = float(np.min(domain[:, 1] - domain[:, 0])) / 2 - collar
    mu = {"family": "bump", "amplitude": 0.5, "center": center, "radius": radius}
    bump = {"family": "bump_displacement", "amplitude": 0.05, "direction": [1.0] * n}
    return [{"name": "identity", "phi": {"family": "identity"}},
            {"name": "mu-only", "mu": mu},
            {"name": "phi-only", "phi": bump},
            {"name": "combined", "phi": bump, "mu": mu}]


def build_gauge_case(case, domain, collar, path):
    if not isinstance(case, dict):
        raise ConfigError("expected a table", path)
    for k in case:
        if k not in ("name", "phi", "mu"):
            raise ConfigError("unknown key", f"{path}.{k}")
    n = domain.shape[0]
    phi = dict(case.get("phi", {"family": "identity"}))
    family = phi.pop("family", None)
    if family is None:
        raise ConfigError("missing required key", f"{path}.phi.family")
    if family == "bump_displacement":
        phi.setdefault("collar_width", collar)
    try:
        phi_map = builtin_diffeo(family, domain, **phi)
    except ConfigError:
        raise
    except (TypeError, ValueError, KeyError) as exc:
        raise ConfigError(str(exc), f"{path}.phi") from exc
    mu_spec = case.get("mu", {"family": "constant", "value": 1.0})
    mu = fam.build_scalar(mu_spec, n, f"{path}.mu")
    return GaugeSpec(phi_map, GaugeFactor(mu, True))


def _gauge(raw, domain, collar):
    g = _table(raw, "gauge")
    cases = g.get("cases", default_gauge_cases(domain, collar))
    if not isinstance(cases, list) or not cases:
        raise ConfigError("expected a non-empty array of tables", "gauge.cases")
    out = {}
    for k, case in enumerate(cases):
        name = case.get("name", f"case{k}") if isinstance(case, dict) else None
        if name in out:
            raise ConfigError(f"duplicate case name {name!r}", f"gauge.cases[{k}].name")
        out[name] = build_gauge_case(case, domain, collar, f"gauge.cases[{k}]")
    return out


def _scaling(raw, domain):
    s = _table(raw, "scaling")
    n = domain.shape[0]
    default_mu = {"family": "bump", "amplitude": 0.5,
                  "center": [float(domain[0, 1])] + [float(domain[a].mean()) for a in range(1, n)],
                  "radius": 0.4 * float(np.min(domain[:, 1] - domain[:, 0]))}
    return {"mu_constant": _number(s.get("mu_constant", 4.0), "scaling.mu_constant", positive=True),
            "nx": _grid_size(s.get("nx", 64), "scaling.nx"),
            "mu_varying": fam.build_scalar(s.get("mu_varying", default_mu), n, "scaling.mu_varying")}


def _checks(raw):
    c = _table(raw, "checks")
    include = c.get("include", list(CHECKS))
    if not isinstance(include, list):
        raise ConfigError("expected a list", "checks.include")
    for k, name in enumerate(include):
        if name not in CHECKS:
            raise ConfigError(f"unknown check {name!r}; expected one of {CHECKS}", f"checks.include[{k}]")
    points = _number(c.get("points", 64), "checks.points", positive=True, integer=True)
    return {"include": include, "points": points}


def _qp(raw):
    q = _table(raw, "qp")
    return {"lambda": _number(q.get("lambda", 2.0), "qp.lambda"),
            "mu": _number(q.get("mu", 1.0), "qp.mu", positive=True),
            "rho": _number(q.get("rho", 1.0), "qp.rho", positive=True),
            "directions": _number(q.get("directions", 16), "qp.directions", positive=True, integer=True)}


def _convergence(raw):
    c = _table(raw, "convergence")
    grids = c.get("self_grids", [33, 65, 129, 257])
    if not isinstance(grids, list) or len(grids) < 3:
        raise ConfigError("need at least three grids", "convergence.self_grids")
    for k, g in enumerate(grids):
        _grid_size(g, f"convergence.self_grids[{k}]")
        if k and g != 2 * grids[k - 1] - 1:
            raise ConfigError("each grid must nest in the next (nx -> 2 nx - 1)",
                              f"convergence.self_grids[{k}]")
    return {"self_grids": grids, "nx_energy": _grid_size(c.get("nx_energy", 128), "convergence.nx_energy"),
            "T": _number(c.get("T", 0.8), "convergence.T", positive=True)}


def _perturbation(raw, domain):
    if "perturbation" not in raw:
        return None
    p = _table(raw, "perturbation")
    return {"amplitude": _number(p.get("amplitude", 0.1), "perturbation.amplitude"),
            "nx": _grid_size(p.get("nx", 128), "perturbation.nx"),
            "center": p.get("center", [float(v) for v in domain.mean(axis=1)]),
            "radius": _number(p.get("radius", 0.25), "perturbation.radius", positive=True)}


def _preset(raw):
    if "preset" not in raw:
        return None
    from .experiments import QUADRANT_PRESETS

    name = _table(raw, "preset").get("name")
    if not isinstance(name, str):
        raise ConfigError("missing required key", "preset.name")
    short = name[len("table1."):] if name.startswith("table1.") else name
    if short not in QUADRANT_PRESETS:
        raise ConfigError(f"unknown preset {name!r}; expected table1.<{'|'.join(QUADRANT_PRESETS)}>",
                          "preset.name")
    return short


def config_hash(raw):
    blob = json.dumps(raw, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode()).hexdigest()


def spec_from_dict(raw, kind=None):
    if kind is not None and kind not in KINDS:
        raise ConfigError(f"unknown experiment kind {kind!r}", "kind")
    for key in raw:
        if key not in _SECTIONS:
            raise ConfigError("unknown key", key)
    seed = raw.get("seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
        raise ConfigError("seed must be a non-negative integer", "seed")
    backend = raw.get("backend")
    if backend not in (None, "numba", "numpy"):
        raise ConfigError("backend must be 'numba' or 'numpy'", "backend")
    domain, nx, grids = _domain(raw)
    t = _table(raw, "time")
    T = _number(t.get("T", 1.0), "time.T", positive=True)
    cfl = _number(t.get("cfl_factor", 0.5), "time.cfl_factor", positive=True)
    if cfl > 1.0:
        raise ConfigError("cfl_factor must not exceed 1", "time.cfl_factor")
    n = domain.shape[0]
    collar = 4.0 * Grid(domain, grids[0]).h_min
    spec = ExperimentSpec(
        kind=kind, seed=seed, backend=backend, domain=domain, nx=nx, grids=grids, T=T, cfl=cfl,
        source=_source(raw, domain), triple=_material(raw, n),
        gauge_cases=_gauge(raw, domain, collar), scaling=_scaling(raw, domain),
        checks=_checks(raw), qp=_qp(raw), convergence=_convergence(raw),
        perturbation=_perturbation(raw, domain), preset=_preset(raw), raw=raw,
        config_hash=config_hash(raw))
    if kind == "table1-preset" and spec.preset is None:
        raise ConfigError("table1-preset needs a [preset] name", "preset.name")
    return spec


def parse_config(path, kind=None):
    """Load and validate a TOML file; an absent path gives all defaults."""
    if path is None:
        return spec_from_dict({}, kind)
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"no such file: {path}", "config") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"invalid TOML: {exc}", "config") from exc
    return spec_from_dict(raw, kind)
