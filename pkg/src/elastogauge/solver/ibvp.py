"""Leapfrog time stepping for the Dirichlet problem with zero initial data."""

import math
from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigError, PositivityError, StabilityError
from ..families import bump_value
from ..operators import christoffel_lambda_max
from .grid import Grid
from .stencil import DiscreteElasticLaplacian

GROWTH_TOL = 0.25
CFL_DIRECTIONS_2D = 64
CFL_DIRECTIONS_3D = 256


# -- boundary signals ----------------------------------------------------------

class BoundarySignal:
    """Dirichlet data ``f(t, x)`` on the boundary nodes.

    Subclasses implement ``__call__(t, X) -> (N, n)`` and set ``t_off``, the
    time from which the signal is identically zero (``inf`` if never).
    """

    t_off = math.inf
    n = 2

    def __call__(self, t, X):
        raise NotImplementedError

    def __add__(self, other):
        return CompositeSource([(1.0, self), (1.0, other)])

    def __rmul__(self, s):
        return CompositeSource([(float(s), self)])

    def compatibility_defect(self, X, k=1e-6):
        """``max(|f(0)|, |d_t f(0)|)`` with a one-sided difference in t."""
        f0 = self(0.0, X)
        df = (self(k, X) - f0) / k
        return float(max(np.abs(f0).max(initial=0.0), np.abs(df).max(initial=0.0)))

    def describe(self):
        return {"family": type(self).__name__}


def burst_envelope(t, frequency, cycles):
    """``sin(2 pi f t) sin^4(pi t / T_b)`` on ``[0, T_b)``, zero after."""
    tb = cycles / frequency
    t = np.asarray(t, dtype=float)
    inside = (t >= 0) & (t < tb)
    w = np.sin(2 * np.pi * frequency * t) * np.sin(np.pi * t / tb) ** 4
    return np.where(inside, w, 0.0)


class BurstSource(BoundarySignal):
    """``f(t, x) = A d w(t) b(x)`` with ``b`` a mollifier bump on one face.

    ``center`` holds the tangential coordinates of the bump centre (the face
    coordinate is implied), ``width`` its radius.
    """

    def __init__(self, grid_or_domain, face, center, width, direction,
                 frequency=4.0, cycles=2.0, amplitude=1.0):
        domain = grid_or_domain.domain if isinstance(grid_or_domain, Grid) else np.asarray(grid_or_domain, float)
        self.n = n = domain.shape[0]
        self.domain = domain
        probe = Grid(domain, 5)
        self.face = probe.face(face) if isinstance(face, str) else face
        tang = [a for a in range(n) if a != self.face.axis]
        center = np.asarray(center, dtype=float).ravel()
        if center.size != n - 1:
            raise ConfigError(f"center needs {n - 1} tangential coordinates", "source/center")
        if width <= 0 or frequency <= 0 or cycles <= 0:
            raise ConfigError("width, frequency and cycles must be positive", "source")
        full = np.empty(n)
        full[tang] = center
        full[self.face.axis] = domain[self.face.axis, self.face.side]
        self.center = full
        self.width = float(width)
        d = np.asarray(direction, dtype=float)
        if d.shape != (n,):
            raise ConfigError(f"direction needs {n} components", "source/direction")
        self.direction = d
        self.frequency = float(frequency)
        self.cycles = float(cycles)
        self.amplitude = float(amplitude)
        self.t_off = self.cycles / self.frequency

    def spatial(self, X):
        plane = self.domain[self.face.axis, self.face.side]
        on_face = np.abs(X[:, self.face.axis] - plane) <= 1e-12 * max(1.0, abs(plane))
        return np.where(on_face, bump_value(X, self.center, self.width), 0.0)

    def __call__(self, t, X):
        w = float(burst_envelope(t, self.frequency, self.cycles))
        if w == 0.0:
            return np.zeros((X.shape[0], self.n))
        return (self.amplitude * w) * self.spatial(X)[:, None] * self.direction

    def describe(self):
        return {"family": "burst", "face": self.face.name, "center": self.center.tolist(),
                "width": self.width, "direction": self.direction.tolist(),
                "frequency": self.frequency, "cycles": self.cycles,
                "amplitude": self.amplitude}


class FunctionSource(BoundarySignal):
    def __init__(self, fn, n, t_off=math.inf, name="function"):
        self.fn, self.n, self.t_off, self.name = fn, n, t_off, name

    def __call__(self, t, X):
        return np.asarray(self.fn(t, X), dtype=float)

    def describe(self):
        return {"family": self.name}


class ZeroSource(BoundarySignal):
    t_off = 0.0

    def __init__(self, n):
        self.n = n

    def __call__(self, t, X):
        return np.zeros((X.shape[0], self.n))

    def describe(self):
        return {"family": "zero"}


class CompositeSource(BoundarySignal):
    """Linear combination of signals."""

    def __init__(self, terms):
        self.terms = [(float(s), f) for s, f in terms]
        self.n = self.terms[0][1].n
        self.t_off = max(f.t_off for _, f in self.terms)

    def __call__(self, t, X):
        out = np.zeros((X.shape[0], self.n))
        for s, f in self.terms:
            out += s * f(t, X)
        return out

    def describe(self):
        return {"family": "composite",
                "terms": [{"scale": s, **f.describe()} for s, f in self.terms]}


# -- time step -----------------------------------------------------------------

def slowness_directions(n, count=None):
    if n == 2:
        count = count or CFL_DIRECTIONS_2D
        th = np.pi * np.arange(count) / count  # conorm is even in p
        return np.stack([np.cos(th), np.sin(th)], axis=1)
    from ..operators import _fibonacci_sphere

    return _fibonacci_sphere(count or CFL_DIRECTIONS_3D)


def max_wave_speed(triple, grid, directions=None, chunk=4096):
    """Max over nodes and sampled unit slowness directions of ``sqrt(lambda_max Gamma)``."""
    P = slowness_directions(grid.n) if directions is None else np.asarray(directions, float)
    X = grid.points()
    best = 0.0
    for s in range(0, len(X), chunk):
        Xc = X[s:s + chunk]
        rho = triple.rho.values(Xc)
        c = triple.c.values(Xc)
        g = np.broadcast_to(np.eye(grid.n), (len(Xc), grid.n, grid.n)) if triple.euclidean else triple.g.values(Xc)
        lam = christoffel_lambda_max(rho[:, None], c[:, None], g[:, None], P[None, :, :])
        best = max(best, float(np.max(lam)))
    return math.sqrt(best) if best > 0 else 0.0


def cfl_dt(triple, grid, cfl_factor, directions=None):
    """``cfl_factor * h_min / v_max``; returns ``(dt, v_max)``."""
    if not (0.0 < cfl_factor <= 1.0):
        raise ConfigError(f"cfl_factor must lie in (0, 1], got {cfl_factor}", "time/cfl_factor")
    v_max = max_wave_speed(triple, grid, directions)
    if not v_max > 0:
        raise PositivityError("maximum wave speed is zero")
    return cfl_factor * grid.h_min / v_max, v_max


def steps_for(T, dt_max):
    """Uniform step not exceeding ``dt_max`` that lands exactly on ``T``."""
    nsteps = max(1, math.ceil(T / dt_max - 1e-12))
    return T / nsteps, nsteps


# -- solve ---------------------------------------------------------------------

@dataclass
class SolveResult:
    """Displacements (history or final state), step data and energy trace.

    ``energy[k]`` is the staggered energy between steps k and k+1.
    """

    u: np.ndarray
    times: np.ndarray
    dt: float
    dt_cfl: float
    v_max: float
    energy: np.ndarray
    delta_min: float
    t_off: float
    history: bool = False
    meta: dict = field(default_factory=dict)

    @property
    def nsteps(self):
        return len(self.times) - 1

    @property
    def final(self):
        return self.u[-1] if self.history else self.u

    def post_source_drift(self):
        """``max |E - E_0| / E_0`` over the steps after the source switched off."""
        k0 = int(np.searchsorted(self.times, self.t_off - 1e-12 * max(1.0, self.t_off)))
        tail = self.energy[k0:]
        if len(tail) == 0 or tail[0] == 0:
            return 0.0
        return float(np.max(np.abs(tail - tail[0])) / tail[0])


def discrete_energy(triple, grid, u_n, u_nm1, dt, operator=None):
    """Staggered leapfrog energy between two consecutive states.

    Kinetic ``1/2 sum rho sqrt|g| |(u^n - u^{n-1})/dt|^2 h^n`` plus
    ``1/2 a_h(u^n, u^{n-1})`` with ``a_h(u, w) = -h^n sum w . A u`` over
    interior nodes.  Conserved exactly by the scheme for constant
    coefficients once the boundary data vanish.
    """
    op = operator or DiscreteElasticLaplacian(triple, grid)
    interior = (slice(None),) + grid.interior
    v = (u_n[interior] - u_nm1[interior]) / dt
    mass = op.rho * op.sqrt_g
    kinetic = 0.5 * grid.cell_volume * float(np.sum(mass * np.sum(v * v, axis=0)))
    return kinetic + 0.5 * op.bilinear(u_nm1, u_n)


def strain_energy(triple, grid, u, operator=None):
    """``1/2 a_h(u, u)``; nonnegative for valid materials."""
    op = operator or DiscreteElasticLaplacian(triple, grid)
    return 0.5 * op.bilinear(u, u)


def solve_ibvp(triple, grid, source, T, cfl_factor=0.5, *, dt=None, backend=None,
               observer=None, keep="last", growth_tol=GROWTH_TOL, operator=None):
    """Leapfrog solve of ``rho d_t^2 u = L u`` with ``u = f`` on the boundary.

    Args:
        dt: override of the step (must divide ``T``); default is the largest
            uniform step below the CFL step.
        observer: called as ``observer(step, t, u)`` for every stored state.
        keep: ``"all"`` stores the full history, ``"last"`` only the final
            state.

    Raises:
        StabilityError: on non-finite values, or when the energy grows by more
            than ``growth_tol`` (relative) after the source has switched off.
    """
    if T <= 0:
        raise ConfigError("final time must be positive", "time/T")
    if keep not in ("all", "last"):
        raise ValueError("keep must be 'all' or 'last'")
    op = operator or DiscreteElasticLaplacian(triple, grid, backend)
    dt_cfl, v_max = cfl_dt(triple, grid, cfl_factor)
    if dt is None:
        dt, nsteps = steps_for(T, dt_cfl)
    else:
        nsteps = int(round(T / dt))
        if abs(nsteps * dt - T) > 1e-9 * T:
            raise ConfigError(f"dt={dt} does not divide T={T}", "time/dt")
    n = grid.n
    bmask = grid.boundary_mask
    Xb = grid.points()[bmask.ravel()]
    interior = (slice(None),) + grid.interior
    times = dt * np.arange(nsteps + 1)
    times[-1] = T
    dt2 = dt * dt
    mass = op.rho * op.sqrt_g
    vol = grid.cell_volume
    t_off = source.t_off

    def inject(u, t):
        vals = source(t, Xb)
        for i in range(n):
            u[i][bmask] = vals[:, i]

    u_prev = np.zeros((n,) + grid.nx)
    u = np.zeros_like(u_prev)
    u[interior] = u_prev[interior] + 0.5 * dt2 * op.acceleration(u_prev)
    inject(u, times[1])
    history = [u_prev.copy(), u.copy()] if keep == "all" else None
    if observer is not None:
        observer(0, times[0], u_prev)
        observer(1, times[1], u)
    energy = np.empty(nsteps)
    v = (u[interior] - u_prev[interior]) / dt
    energy[0] = 0.5 * vol * float(np.sum(mass * np.sum(v * v, axis=0))) + 0.5 * op.bilinear(u_prev, u)
    e_ref = None
    for k in range(1, nsteps):
        Au = op.apply_flux_divergence(u)
        u_next = np.empty_like(u)
        u_next[interior] = 2.0 * u[interior] - u_prev[interior] + dt2 * (Au * op.inv_mass)
        inject(u_next, times[k + 1])
        v = (u_next[interior] - u[interior]) / dt
        kin = 0.5 * vol * float(np.sum(mass * np.sum(v * v, axis=0)))
        energy[k] = kin - 0.5 * vol * float(np.sum(u_next[interior] * Au))
        if not math.isfinite(energy[k]):
            raise StabilityError(f"non-finite state at step {k + 1} (t={times[k + 1]:.6g})")
        if times[k] >= t_off:
            if e_ref is None:
                e_ref = energy[k]
            elif energy[k] > (1.0 + growth_tol) * e_ref + 1e-300:
                raise StabilityError(
                    f"energy grew by {energy[k] / e_ref - 1:.3e} after the source switched off "
                    f"(step {k + 1}, dt={dt:.4g}, dt_cfl={dt_cfl:.4g})")
        u_prev, u = u, u_next
        if history is not None:
            history.append(u.copy())
        if observer is not None:
            observer(k + 1, times[k + 1], u)
    out = np.stack(history) if history is not None else u
    return SolveResult(out, times, dt, dt_cfl, v_max, energy, op.delta_min, t_off,
                       history=history is not None,
                       meta={"backend": op.backend, "nx": list(grid.nx)})
