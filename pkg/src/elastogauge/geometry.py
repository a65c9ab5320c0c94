"""Diffeomorphisms, gauge factors and the pushforward laws.

Pushforwards compose evaluators: a pushed field evaluated at ``y`` pulls
``y`` back through the inverse map, evaluates the source field there and
applies the Jacobian factors.  For affine maps with analytic source fields
the partials stay analytic (chain rule with a constant Jacobian); in every
other case they are finite differences on the composed evaluator, so the
second derivatives of the map are never needed.
"""

from dataclasses import dataclass, replace
from typing import Callable, Optional

import numpy as np

from .errors import ConformalityError, GaugeError, JacobianError
from .families import bump_grad, bump_value
from .fields import (ANALYTIC, COMPOSED_FD_ORDER, SmoothField,
                     as_points, check_dimension, fd_gradient)
from .tensor_core import enforce_symmetry, probe_points

TOL_INV = 1e-10
TOL_CONFORMAL = 1e-8
# order-4 FD step for partials of fields pushed through non-affine maps; near
# the roundoff/truncation balance for nested second differences
PUSH_H_FD = 1e-4


@dataclass(frozen=True)
class DiffeoMap:
    """An orientation-preserving diffeomorphism of a box in R^n.

    ``forward``/``inverse`` act on (N, n) batches.  Without ``jacobian_fn``
    the Jacobian is a centered difference of ``forward`` with step ``h_fd``.
    ``collar_width > 0`` asserts the map is the identity within that
    distance of the boundary of ``domain``.  ``push_h_fd`` is the FD step
    used for partials of fields pushed forward through a non-affine map.
    """

    forward: Callable
    inverse: Callable
    n: int
    jacobian_fn: Optional[Callable] = None
    collar_width: float = 0.0
    domain: Optional[np.ndarray] = None
    affine: bool = False
    h_fd: float = 1e-4
    name: str = "diffeo"
    push_h_fd: float = PUSH_H_FD

    @property
    def jacobian_mode(self):
        return ANALYTIC if self.jacobian_fn is not None else "fd"

    def __call__(self, x):
        X, single = as_points(x, self.n)
        y = self.forward(X)
        return y[0] if single else y

    def inv(self, y):
        Y, single = as_points(y, self.n)
        x = self.inverse(Y)
        return x[0] if single else x

    def jacobian(self, x):
        """``D phi`` with rows indexing the image coordinate."""
        X, single = as_points(x, self.n)
        if self.jacobian_fn is not None:
            J = self.jacobian_fn(X)
        else:
            # fd_gradient puts the derivative axis first: d_a phi^i -> J[i, a]
            J = np.swapaxes(fd_gradient(self.forward, X, self.h_fd, 2), 1, 2)
        return J[0] if single else J

    def with_fd_jacobian(self, h_fd, push_h_fd=None):
        return replace(self, jacobian_fn=None, h_fd=h_fd,
                       push_h_fd=self.push_h_fd if push_h_fd is None else push_h_fd,
                       name=f"{self.name}[fd h={h_fd:g}]")

    def inverse_map(self):
        jf = self.jacobian_fn
        jac = None if jf is None else (lambda Y: np.linalg.inv(jf(self.inverse(Y))))
        return DiffeoMap(self.inverse, self.forward, self.n, jac, self.collar_width,
                         self.domain, self.affine, self.h_fd, f"{self.name}^-1")

    def compose(self, other):
        """``self o other``."""
        if self.jacobian_fn is not None and other.jacobian_fn is not None:
            def jac(X):
                return self.jacobian_fn(other.forward(X)) @ other.jacobian_fn(X)
        else:
            jac = None
        return DiffeoMap(lambda X: self.forward(other.forward(X)),
                         lambda Y: other.inverse(self.inverse(Y)), self.n, jac,
                         min(self.collar_width, other.collar_width),
                         self.domain if self.domain is not None else other.domain,
                         self.affine and other.affine, min(self.h_fd, other.h_fd),
                         f"{self.name}o{other.name}")

    def det_range(self, points):
        d = np.linalg.det(self.jacobian(np.atleast_2d(points)))
        return float(d.min()), float(d.max())

    def check(self, points, tol_inv=TOL_INV):
        """Validate inverse round trip, orientation and collar at ``points``."""
        X = np.atleast_2d(np.asarray(points, dtype=float))
        back = self.inverse(self.forward(X))
        err = np.max(np.abs(back - X))
        if err > tol_inv * max(1.0, np.abs(X).max()):
            raise JacobianError(f"inverse round trip error {err:.3e}")
        if self.det_range(X)[0] <= 0:
            raise JacobianError("Jacobian determinant not positive")
        if self.collar_width > 0:
            if self.domain is None:
                raise JacobianError("collar requires a domain")
            inside = collar_mask(X, self.domain, self.collar_width)
            if np.any(inside):
                Xc = X[inside]
                if np.any(self.forward(Xc) != Xc):
                    raise JacobianError("map is not the identity inside its collar")
                if np.any(self.jacobian(Xc) != np.eye(self.n)):
                    raise JacobianError("Jacobian is not the identity inside its collar")
        return True


def collar_mask(X, domain, width):
    domain = np.asarray(domain, dtype=float)
    dist = np.minimum(X - domain[:, 0], domain[:, 1] - X).min(axis=1)
    return dist <= width


# -- pushforward machinery -------------------------------------------------------

def _pushed(field, phi, transform, shape, name):
    """Compose ``field`` with ``phi^-1`` and a Jacobian-dependent linear map.

    ``transform(values, J, Jinv, det)`` must be linear in ``values``.
    """
    n = field.n

    def frame(Y):
        X = phi.inverse(Y)
        J = phi.jacobian(X)
        return X, J, np.linalg.inv(J), np.linalg.det(J)

    def fn(Y):
        X, J, Ji, det = frame(Y)
        return transform(field.values(X), J, Ji, det)

    if not (phi.affine and field.derivative_mode == ANALYTIC):
        return SmoothField(fn, n, shape, max_order=field.max_order,
                           h_fd=phi.push_h_fd, fd_order=COMPOSED_FD_ORDER, name=name)

    # constant Jacobian: d/dy = (D phi^-1)^a_b d/dx^a, and the transform commutes
    def grad(Y):
        X, J, Ji, det = frame(Y)
        dF = np.einsum("Na...,Nab->Nb...", field.grad(X), Ji)
        return np.stack([transform(dF[:, b], J, Ji, det) for b in range(n)], axis=1)

    def hess(Y):
        X, J, Ji, det = frame(Y)
        ddF = np.einsum("Nac...,Nab,Ncd->Nbd...", field.hess(X), Ji, Ji)
        rows = [np.stack([transform(ddF[:, b, d], J, Ji, det) for d in range(n)], axis=1)
                for b in range(n)]
        return np.stack(rows, axis=1)

    return SmoothField(fn, n, shape, grad, hess, max_order=field.max_order, name=name)


def _push_c(c, J):
    t = np.einsum("Nijkl,Ndl->Nijkd", c, J)
    t = np.einsum("Nijkd,Nck->Nijcd", t, J)
    t = np.einsum("Nijcd,Nbj->Nibcd", t, J)
    t = np.einsum("Nibcd,Nai->Nabcd", t, J)
    return enforce_symmetry(t)


def _det_power(det, p, ndim):
    return (det ** p).reshape(det.shape + (1,) * ndim)


def pushforward_metric(g, phi):
    """``(phi_* g)_ab = g_ij (D phi^-1)^i_a (D phi^-1)^j_b`` at ``phi^-1(y)``."""
    def t(G, J, Ji, det):
        return np.einsum("Nij,Nia,Njb->Nab", G, Ji, Ji)

    return _pushed(g, phi, t, g.shape, f"push({g.name})")


def pushforward_stiffness(c, phi):
    """Four Jacobian factors on the contravariant indices; symmetry preserved."""
    return _pushed(c, phi, lambda C, J, Ji, det: _push_c(C, J), c.shape, f"push({c.name})")


def pushforward_scalar(rho, phi):
    return _pushed(rho, phi, lambda R, J, Ji, det: R, rho.shape, f"push({rho.name})")


def pushforward_vector(u, phi):
    return _pushed(u, phi, lambda U, J, Ji, det: np.einsum("Nma,Na->Nm", J, U),
                   u.shape, f"push({u.name})")


def pushforward_covector(nu, phi):
    return _pushed(nu, phi, lambda V, J, Ji, det: np.einsum("Nj,Nja->Na", V, Ji),
                   nu.shape, f"push({nu.name})")


def pullback_vector_values(v_at_image, phi, x):
    """``(phi^* v)(x) = (D phi(x))^-1 v(phi(x))`` for sampled image values."""
    X, single = as_points(x, phi.n)
    out = np.linalg.solve(phi.jacobian(X), np.atleast_2d(v_at_image)[..., None])[..., 0]
    return out[0] if single else out


def _require_conformal(phi, points, tol):
    if phi.jacobian_fn is None:
        # a difference Jacobian is conformal only up to its own truncation error
        tol = max(tol, phi.h_fd ** 2)
    if not is_conformal(phi, tol, points):
        raise ConformalityError(f"{phi.name} is not conformal on the probe set")


def square_pushforward(rho, c, phi, points=None, tol=TOL_CONFORMAL):
    """Determinant-weighted pushforward of the pair (rho, c) over a conformal map."""
    _require_conformal(phi, points, tol)
    n = phi.n
    p = -1.0 - 2.0 / n
    c_sq = _pushed(c, phi, lambda C, J, Ji, det: _det_power(det, p, 4) * _push_c(C, J),
                   c.shape, f"square({c.name})")
    rho_sq = _pushed(rho, phi, lambda R, J, Ji, det: R / det, rho.shape, f"square({rho.name})")
    return rho_sq, c_sq


def black_pushforward(c, phi, points=None, tol=TOL_CONFORMAL):
    """Determinant-weighted pushforward of c alone over a conformal map."""
    _require_conformal(phi, points, tol)
    p = -2.0 / phi.n
    return _pushed(c, phi, lambda C, J, Ji, det: _det_power(det, p, 4) * _push_c(C, J),
                   c.shape, f"black({c.name})")


def conformality_defect(phi, points):
    X = np.atleast_2d(np.asarray(points, dtype=float))
    J = phi.jacobian(X)
    det = np.linalg.det(J)
    JtJ = np.einsum("Nai,Naj->Nij", J, J)
    target = np.abs(det)[:, None, None] ** (2.0 / phi.n) * np.eye(phi.n)
    num = np.linalg.norm(JtJ - target, axis=(1, 2))
    den = np.linalg.norm(J, axis=(1, 2)) ** 2
    return num / den


def is_conformal(phi, tol=TOL_CONFORMAL, points=None):
    """``|J^T J - det(J)^(2/n) I| <= tol |J|^2`` at every probe point."""
    if points is None:
        if phi.domain is None:
            raise ValueError("is_conformal needs probe points or a map with a domain")
        points = probe_points(phi.domain, seed=1)
    return bool(np.all(conformality_defect(phi, points) <= tol))


# -- gauge factor ---------------------------------------------------------------

def boundary_points(domain, per_face=32, seed=0):
    """Quasi-random points on every face of a box."""
    domain = np.asarray(domain, dtype=float)
    n = domain.shape[0]
    rng = np.random.default_rng(seed)
    pts = []
    for axis in range(n):
        for side in (0, 1):
            P = domain[:, 0] + rng.random((per_face, n)) * (domain[:, 1] - domain[:, 0])
            P[:, axis] = domain[axis, side]
            pts.append(P)
    return np.vstack(pts)


@dataclass(frozen=True)
class GaugeFactor:
    """A strictly positive scalar field, optionally asserting mu = 1 on the boundary."""

    mu: SmoothField
    boundary_one: bool = False

    def validate(self, domain, tol=1e-12, seed=0):
        X = probe_points(domain, seed=seed, margin=0.0)
        B = boundary_points(domain, seed=seed)
        vals = self.mu.values(np.vstack([X, B]))
        if np.any(vals <= 0) or not np.all(np.isfinite(vals)):
            raise GaugeError("gauge factor must be strictly positive")
        if self.boundary_one:
            dev = np.max(np.abs(self.mu.values(B) - 1.0))
            if dev > tol:
                raise GaugeError(f"gauge factor deviates from 1 on the boundary by {dev:.3e}")
        return True


# -- builtin maps ---------------------------------------------------------------

def _rotation(angle, n):
    R = np.eye(n)
    c, s = np.cos(angle), np.sin(angle)
    R[0, 0], R[0, 1], R[1, 0], R[1, 1] = c, -s, s, c
    return R


def identity_map(n, domain=None):
    return DiffeoMap(lambda X: X.copy(), lambda Y: Y.copy(), n,
                     lambda X: np.broadcast_to(np.eye(n), (X.shape[0], n, n)).copy(),
                     collar_width=np.inf if domain is not None else 0.0,
                     domain=domain, affine=True, name="identity")


def linear_conformal(scale, rotation=None, shift=None, n=2, domain=None):
    """``x -> s R x + b``; ``rotation`` is an angle (plane x1-x2) or a matrix."""
    if scale <= 0:
        raise JacobianError("scale must be positive")
    if rotation is None:
        R = np.eye(n)
    elif np.ndim(rotation) == 0:
        R = _rotation(float(rotation), n)
    else:
        R = np.asarray(rotation, dtype=float)
    if not np.allclose(R.T @ R, np.eye(n), atol=1e-12) or np.linalg.det(R) <= 0:
        raise JacobianError("rotation must be a proper orthogonal matrix")
    b = np.zeros(n) if shift is None else np.asarray(shift, dtype=float)
    A = scale * R
    Ainv = R.T / scale
    return DiffeoMap(lambda X: X @ A.T + b, lambda Y: (Y - b) @ Ainv.T, n,
                     lambda X: np.broadcast_to(A, (X.shape[0], n, n)).copy(),
                     domain=domain, affine=True, name=f"linear_conformal(s={scale:g})")


def affine_map(matrix, shift=None, domain=None):
    """``x -> A x + b`` with ``det A > 0``."""
    A = np.asarray(matrix, dtype=float)
    n = check_dimension(A.shape[0])
    if A.shape != (n, n) or np.linalg.det(A) <= 0:
        raise JacobianError("affine map needs a square matrix with positive determinant")
    b = np.zeros(n) if shift is None else np.asarray(shift, dtype=float)
    Ainv = np.linalg.inv(A)
    return DiffeoMap(lambda X: X @ A.T + b, lambda Y: (Y - b) @ Ainv.T, n,
                     lambda X: np.broadcast_to(A, (X.shape[0], n, n)).copy(),
                     domain=domain, affine=True, name="affine")


def holomorphic_sample(domain=None):
    """``z -> z^2 + z`` in the plane; conformal wherever ``2z + 1 != 0``."""
    def fwd(X):
        z = X[:, 0] + 1j * X[:, 1]
        w = z * z + z
        return np.stack([w.real, w.imag], axis=1)

    def inv(Y):
        w = Y[:, 0] + 1j * Y[:, 1]
        z = 0.5 * (-1.0 + np.sqrt(1.0 + 4.0 * w))
        return np.stack([z.real, z.imag], axis=1)

    def jac(X):
        a = 2.0 * X[:, 0] + 1.0
        b = 2.0 * X[:, 1]
        J = np.empty((X.shape[0], 2, 2))
        J[:, 0, 0], J[:, 0, 1], J[:, 1, 0], J[:, 1, 1] = a, -b, b, a
        return J

    if domain is None:
        domain = np.array([[-0.2, 0.2], [-0.2, 0.2]])
    return DiffeoMap(fwd, inv, 2, jac, domain=np.asarray(domain, float), name="holomorphic")


def exp_conformal(domain=None):
    """``z -> exp(z)`` in the plane; conformal everywhere."""
    def fwd(X):
        w = np.exp(X[:, 0] + 1j * X[:, 1])
        return np.stack([w.real, w.imag], axis=1)

    def inv(Y):
        z = np.log(Y[:, 0] + 1j * Y[:, 1])
        return np.stack([z.real, z.imag], axis=1)

    def jac(X):
        w = np.exp(X[:, 0] + 1j * X[:, 1])
        J = np.empty((X.shape[0], 2, 2))
        J[:, 0, 0], J[:, 0, 1], J[:, 1, 0], J[:, 1, 1] = w.real, -w.imag, w.imag, w.real
        return J

    if domain is None:
        domain = np.array([[-0.5, 0.5], [-0.5, 0.5]])
    return DiffeoMap(fwd, inv, 2, jac, domain=np.asarray(domain, float), name="exp_conformal")


def bump_displacement(amplitude, direction, domain, collar_width, center=None,
                      min_det=0.5, check_resolution=201):
    """``x -> x + a psi(x) v`` with psi the mollifier on the largest ball that
    keeps ``collar_width`` clear of the boundary.

    Raises :class:`JacobianError` if ``det D phi < min_det`` anywhere on a
    check grid of the domain.
    """
    domain = np.asarray(domain, dtype=float)
    n = check_dimension(domain.shape[0])
    v = np.asarray(direction, dtype=float)
    v = v / np.linalg.norm(v)
    ctr = domain.mean(axis=1) if center is None else np.asarray(center, dtype=float)
    radius = float(np.min(np.minimum(ctr - domain[:, 0], domain[:, 1] - ctr))) - collar_width
    if radius <= 0:
        raise JacobianError("collar leaves no room for the bump")
    a = float(amplitude)

    def fwd(X):
        return X + a * bump_value(X, ctr, radius)[:, None] * v

    def jac(X):
        return np.eye(n) + a * v[None, :, None] * bump_grad(X, ctr, radius)[:, None, :]

    def inv(Y):
        X = Y.copy()
        if a == 0.0:
            return X
        active = np.sum((Y - ctr) ** 2, axis=1) < (radius + abs(a)) ** 2
        for _ in range(60):
            Xa = X[active]
            resid = fwd(Xa) - Y[active]
            if np.max(np.abs(resid), initial=0.0) < 1e-15:
                break
            X[active] = Xa - np.linalg.solve(jac(Xa), resid[..., None])[..., 0]
        return X

    axes = [np.linspace(lo, hi, check_resolution if n == 2 else 41) for lo, hi in domain]
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, n)
    dets = np.linalg.det(jac(grid))
    if dets.min() < min_det:
        raise JacobianError(f"bump amplitude {a} gives det D phi = {dets.min():.3f} < {min_det}")
    return DiffeoMap(fwd, inv, n, jac, collar_width=collar_width, domain=domain,
                     name=f"bump_displacement(a={a:g})")


def builtin_diffeo(family, domain, **params):
    domain = np.asarray(domain, dtype=float)
    n = domain.shape[0]
    if family == "identity":
        return identity_map(n, domain)
    if family == "bump_displacement":
        return bump_displacement(params.get("amplitude", 0.0), params.get("direction", [1.0] + [0.0] * (n - 1)),
                                 domain, params["collar_width"], params.get("center"))
    if family == "linear_conformal":
        return linear_conformal(params.get("scale", 1.0), params.get("angle", 0.0),
                                params.get("shift"), n, domain)
    if family == "affine":
        return affine_map(params["matrix"], params.get("shift"), domain)
    if family == "holomorphic_sample":
        if n != 2:
            raise ValueError("holomorphic_sample is two-dimensional")
        return holomorphic_sample(domain)
    if family == "exp_conformal":
        if n != 2:
            raise ValueError("exp_conformal is two-dimensional")
        return exp_conformal(domain)
    raise ValueError(f"unknown diffeomorphism family {family!r}")
