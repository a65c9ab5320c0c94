"""Discrete Dirichlet-to-Neumann records and the gauge checks built on them.

A record holds the Neumann trace ``nu_j c^{ijkl} g_lm d_k u^m`` of the
solution at every step and every open-face boundary node.  ``nu`` is the
outward unit covector of the coordinate box.
"""

import math
import os
import tempfile
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import GaugeError
from .fields import scaled
from .geometry import (GaugeFactor, collar_mask, pushforward_metric,
                       pushforward_scalar, pushforward_stiffness)
from .solver.grid import AXIS_NAMES, Grid
from .solver.ibvp import cfl_dt, solve_ibvp, steps_for
from .solver.stencil import DiscreteElasticLaplacian
from .tensor_core import MaterialTriple, probe_points

P_MIN = 1.0
P_TARGET = 2.0
# below this every d(h) is an exact discrete identity, not a convergence study
EXACT_FLOOR = 1e-12


# -- Neumann trace ----------------------------------------------------------------

def _one_sided(u, axis, side, h):
    """Second-order one-sided derivative along ``axis`` at the face nodes."""
    take = lambda k: np.take(u, k, axis=axis)
    if side == 0:
        return (-3.0 * take(0) + 4.0 * take(1) - take(2)) / (2.0 * h)
    return (3.0 * take(-1) - 4.0 * take(-2) + take(-3)) / (2.0 * h)


def _centered(u, axis, h):
    n = u.shape[axis]
    return (np.take(u, range(2, n), axis=axis) - np.take(u, range(0, n - 2), axis=axis)) / (2.0 * h)


class TraceOperator:
    """Neumann traces on every open face, with coefficients sampled once."""

    def __init__(self, triple, grid):
        self.grid = grid
        self.n = n = grid.n
        self.faces = grid.faces
        self.index = []
        self.coef = []
        points, labels = [], []
        for f in self.faces:
            idx = grid.face_index(f)
            X = grid.points(idx)
            c = triple.c.values(X)
            sign = float(f.normal)
            if triple.euclidean:
                K = sign * c[:, :, f.axis]
            else:
                K = sign * np.einsum("Nikl,Nlm->Nikm", c[:, :, f.axis], triple.g.values(X))
            self.index.append(idx)
            self.coef.append(K)
            points.append(X)
            labels += [f.name] * len(X)
        self.points = np.vstack(points)
        self.labels = np.array(labels)
        self.weights = np.concatenate([
            np.full(len(i[0]), float(np.prod([grid.h[a] for a in range(n) if a != f.axis])))
            for f, i in zip(self.faces, self.index)])

    def face_gradient(self, u, face):
        """``du[N, k, m]`` at the open-face nodes of ``face``."""
        grid = self.grid
        n = self.n
        sel = [slice(1, -1)] * n
        sel[face.axis] = slice(None)
        block = u[(slice(None),) + tuple(sel)]
        parts = []
        for k in range(n):
            if k == face.axis:
                d = _one_sided(block, 1 + k, face.side, grid.h[k])
            else:
                wide = [slice(1, -1)] * n
                wide[k] = slice(None)
                wide[face.axis] = slice(None)
                d = _centered(u[(slice(None),) + tuple(wide)], 1 + k, grid.h[k])
                d = np.take(d, 0 if face.side == 0 else -1, axis=1 + face.axis)
            parts.append(d.reshape(n, -1))
        return np.stack(parts, axis=0).transpose(2, 0, 1)

    def __call__(self, u):
        out = [np.einsum("Nikm,Nkm->Ni", K, self.face_gradient(u, f))
               for f, K in zip(self.faces, self.coef)]
        return np.vstack(out)


def neumann_trace(triple, grid, u, node, t=None):
    """Trace at one boundary node (multi-index); ``t`` is informational."""
    face = grid.classify(node)
    op = TraceOperator(triple, grid)
    fi = op.faces.index(face)
    idx = op.index[fi]
    match = np.all(np.stack([idx[a] == node[a] for a in range(grid.n)]), axis=0)
    offset = sum(len(i[0]) for i in op.index[:fi])
    return op(u)[offset + int(np.argmax(match))]


# -- records ------------------------------------------------------------------------

@dataclass
class DNRecord:
    """Traces ``data[step, node, i]`` at the open-face nodes."""

    data: np.ndarray
    times: np.ndarray
    dt: float
    points: np.ndarray
    faces: np.ndarray
    weights: np.ndarray
    grid_nx: tuple
    source: dict = field(default_factory=dict)
    solve: dict = field(default_factory=dict)

    def scaled_by(self, factor):
        """Pointwise multiplication by ``factor[node]``."""
        return DNRecord(self.data * np.asarray(factor)[None, :, None], self.times, self.dt,
                        self.points, self.faces, self.weights, self.grid_nx, self.source,
                        self.solve)

    def to_csv(self, path):
        n = self.points.shape[1]
        header = "t," + ",".join(f"node_{AXIS_NAMES[a]}" for a in range(n)) + ",face,i,value\n"

        def rows():
            for s, t in enumerate(self.times):
                for k in range(len(self.points)):
                    coords = ",".join("%.17g" % v for v in self.points[k])
                    for i in range(n):
                        yield "%.17g,%s,%s,%d,%.17g\n" % (t, coords, self.faces[k], i, self.data[s, k, i])

        write_atomic(path, header, rows())


def write_atomic(path, header, lines):
    """Write through a temporary file in the target directory, then rename."""
    path = os.fspath(path)
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=".csv")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(header)
            for line in lines:
                fh.write(line)
        os.chmod(tmp, 0o644)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def compute_dn(triple, source, grid, T, cfl=0.5, *, dt=None, backend=None):
    op = DiscreteElasticLaplacian(triple, grid, backend)
    trace = TraceOperator(triple, grid)
    frames = []
    result = solve_ibvp(triple, grid, source, T, cfl, dt=dt, operator=op,
                        observer=lambda k, t, u: frames.append(trace(u)))
    return DNRecord(np.stack(frames), result.times, result.dt, trace.points, trace.labels,
                    trace.weights, grid.nx, source.describe(),
                    {"dt": result.dt, "dt_cfl": result.dt_cfl, "v_max": result.v_max,
                     "delta_min": result.delta_min, "nsteps": result.nsteps,
                     "energy_drift": result.post_source_drift()})


@dataclass(frozen=True)
class DNDistance:
    total: float
    per_face: dict


def dn_distance(record, reference):
    """Relative weighted L2 distance over steps, open-face nodes and components."""
    if record.data.shape != reference.data.shape or not np.array_equal(record.times, reference.times):
        raise ValueError("records were computed on different grids or time steps")
    w = reference.weights[None, :, None]
    diff = record.data - reference.data

    def rel(mask):
        num = float(np.sum((w * diff * diff)[:, mask]))
        den = float(np.sum((w * reference.data * reference.data)[:, mask]))
        if den == 0.0:
            return 0.0 if num == 0.0 else math.inf
        return math.sqrt(num / den)

    per_face = {f: rel(reference.faces == f) for f in dict.fromkeys(reference.faces)}
    return DNDistance(rel(np.ones(len(reference.faces), dtype=bool)), per_face)


# -- gauge transformations -------------------------------------------------------------

@dataclass(frozen=True)
class GaugeSpec:
    """A boundary-fixing map and a positive factor; ``strict`` mode also
    requires the factor to equal 1 on the boundary."""

    phi: object
    mu: GaugeFactor
    strict: bool = True

    def validate(self, domain, collar_floor=0.0):
        domain = np.asarray(domain, dtype=float)
        if not self.phi.collar_width > 0:
            raise GaugeError("the map must be the identity on a collar of the boundary")
        if self.phi.collar_width < collar_floor:
            raise GaugeError(f"collar {self.phi.collar_width:g} is narrower than {collar_floor:g}")
        if self.phi.domain is not None and not np.allclose(self.phi.domain, domain):
            raise GaugeError("map and experiment domains differ")
        X = probe_points(domain, 256, seed=7, margin=0.0)
        self.phi.check(X)
        GaugeFactor(self.mu.mu, boundary_one=self.strict or self.mu.boundary_one).validate(domain)
        if self.strict and math.isfinite(self.phi.collar_width):
            inside = collar_mask(X, domain, self.phi.collar_width)
            if np.any(self.mu.mu.values(X[inside]) != 1.0):
                raise GaugeError("gauge factor is not exactly 1 inside the collar")
        return True


def gauge_exponents(n):
    return n / (2.0 + n), 1.0, -2.0 / (2.0 + n)


def gauge_transform_triple(triple, spec, domain=None):
    """``(mu^(n/(2+n)) phi_* rho, mu phi_* c, mu^(-2/(2+n)) phi_* g)``."""
    n = triple.n
    if domain is not None:
        spec.validate(domain)
    else:
        dom = spec.phi.domain if spec.phi.domain is not None else np.array([[0.0, 1.0]] * n)
        if np.any(spec.mu.mu.values(probe_points(dom, 256, seed=3)) <= 0):
            raise GaugeError("gauge factor must be strictly positive")
    a_rho, a_c, a_g = gauge_exponents(n)
    mu = spec.mu.mu
    return MaterialTriple(scaled(mu, pushforward_scalar(triple.rho, spec.phi), a_rho),
                          scaled(mu, pushforward_stiffness(triple.c, spec.phi), a_c),
                          scaled(mu, pushforward_metric(triple.g, spec.phi), a_g))


def common_dt(triples, grid, T, cfl):
    """One step for several media: the smallest of their uniform CFL steps."""
    return min(steps_for(T, cfl_dt(t, grid, cfl)[0])[0] for t in triples)


@dataclass
class GaugeRow:
    nx: tuple
    h: float
    d: float
    per_face: dict
    order: Optional[float] = None
    dt: float = 0.0


@dataclass
class GaugeReport:
    rows: list
    passed: bool
    rule: str
    p_min: float = P_MIN
    target: float = P_TARGET

    @property
    def orders(self):
        return [r.order for r in self.rows[1:]]


def observed_orders(hs, ds):
    out = [None]
    for k in range(1, len(ds)):
        if ds[k] > 0 and ds[k - 1] > 0:
            out.append(math.log(ds[k - 1] / ds[k]) / math.log(hs[k - 1] / hs[k]))
        else:
            out.append(math.inf if ds[k] == 0 else None)
    return out


def convergence_verdict(ds, orders, p_min=P_MIN, floor=EXACT_FLOOR):
    """PASS when every distance is at the exact floor, or the sequence is
    strictly decreasing with every pairwise order at least ``p_min``."""
    if all(d <= floor for d in ds):
        return True, "exact"
    monotone = all(ds[k] < ds[k - 1] for k in range(1, len(ds)))
    ok = monotone and all(o is not None and o >= p_min for o in orders[1:])
    return ok, "converging" if ok else "not converging"


def _grids(domain, grids):
    out = [g if isinstance(g, Grid) else Grid(domain, g) for g in grids]
    hs = [g.h_min for g in out]
    if any(hs[k] <= hs[k + 1] for k in range(len(hs) - 1)):
        raise ValueError("grid sequence must be strictly refining")
    return out


def verify_gauge_invariance(triple, spec, source, domain, grids, T, cfl=0.5, *,
                            p_min=P_MIN, backend=None, validate=True):
    domain = np.asarray(domain, dtype=float)
    if validate:
        spec.validate(domain)
    other = gauge_transform_triple(triple, spec)
    rows = []
    for grid in _grids(domain, grids):
        dt = common_dt([triple, other], grid, T, cfl)
        a = compute_dn(triple, source, grid, T, cfl, dt=dt, backend=backend)
        b = compute_dn(other, source, grid, T, cfl, dt=dt, backend=backend)
        dist = dn_distance(b, a)
        rows.append(GaugeRow(grid.nx, grid.h_min, dist.total, dist.per_face, dt=dt))
    orders = observed_orders([r.h for r in rows], [r.d for r in rows])
    for r, o in zip(rows, orders):
        r.order = o
    ok, rule = convergence_verdict([r.d for r in rows], orders, p_min)
    return GaugeReport(rows, ok, rule, p_min)


@dataclass
class ScalingResult:
    residual: float
    per_face: dict
    boundary_factor_range: tuple
    dt: float


def scaling_triple(triple, mu):
    a_rho, a_c, a_g = gauge_exponents(triple.n)
    return MaterialTriple(scaled(mu, triple.rho, a_rho), scaled(mu, triple.c, a_c),
                          scaled(mu, triple.g, a_g))


def dn_scaling_check(triple, mu, source, grid, T, cfl=0.5, *, backend=None):
    """Compare the record of the mu-scaled medium with ``mu^(n/(2+n))`` times
    the original record, the factor taken pointwise at the boundary nodes."""
    mu_field = mu.mu if isinstance(mu, GaugeFactor) else mu
    X = np.vstack([grid.points()])
    if np.any(mu_field.values(X) <= 0):
        raise GaugeError("scaling factor must be strictly positive")
    other = scaling_triple(triple, mu_field)
    dt = common_dt([triple, other], grid, T, cfl)
    a = compute_dn(triple, source, grid, T, cfl, dt=dt, backend=backend)
    b = compute_dn(other, source, grid, T, cfl, dt=dt, backend=backend)
    factor = mu_field.values(a.points) ** gauge_exponents(triple.n)[0]
    dist = dn_distance(b, a.scaled_by(factor))
    return ScalingResult(dist.total, dist.per_face, (float(factor.min()), float(factor.max())), dt)


def scaling_convergence(triple, mu, source, domain, grids, T, cfl=0.5, *, p_min=P_MIN,
                        backend=None):
    rows = []
    for grid in _grids(np.asarray(domain, float), grids):
        res = dn_scaling_check(triple, mu, source, grid, T, cfl, backend=backend)
        rows.append(GaugeRow(grid.nx, grid.h_min, res.residual, res.per_face, dt=res.dt))
    orders = observed_orders([r.h for r in rows], [r.d for r in rows])
    for r, o in zip(rows, orders):
        r.order = o
    ok, rule = convergence_verdict([r.d for r in rows], orders, p_min)
    return GaugeReport(rows, ok, rule, p_min)


def perturbation_probe(triple, perturbed, source, grid, T, cfl=0.5, *, backend=None):
    """Relative DN distance between two media on one grid."""
    dt = common_dt([triple, perturbed], grid, T, cfl)
    a = compute_dn(triple, source, grid, T, cfl, dt=dt, backend=backend)
    b = compute_dn(perturbed, source, grid, T, cfl, dt=dt, backend=backend)
    return dn_distance(b, a).total


def stiffness_perturbation(triple, amplitude, center, radius):
    """``c -> (1 + amplitude psi) c`` for a mollifier ``psi`` on a ball."""
    from .families import bump_scalar

    s = bump_scalar(amplitude, center, radius, triple.n, base=1.0)
    return MaterialTriple(triple.rho, scaled(s, triple.c), triple.g)
