"""Point-evaluable smooth fields.

Every field maps a batch of points ``X`` of shape ``(N, n)`` to values of
shape ``(N, *shape)``.  First partials come back as ``(N, n, *shape)`` with the
differentiation axis right after the batch axis; second partials as
``(N, n, n, *shape)``.

Partials are either supplied by the caller (``ANALYTIC``) or obtained by
centered finite differences (``FD``).
"""

import numpy as np

from .errors import DimensionError, FieldOrderError

ANALYTIC = "analytic"
FD = "fd"

# (offset, weight) pairs for centered first differences, divided by h
_FIRST_DIFF = {
    2: ((1, 0.5),),
    4: ((1, 8.0 / 12.0), (2, -1.0 / 12.0)),
}

# Fields built by composition (pushforwards, products with FD factors) use a
# wider, higher-order stencil so their partials stay well below the residual
# tolerances the operator checks work at.
COMPOSED_H_FD = 1e-3
COMPOSED_FD_ORDER = 4


def as_points(x, n=None):
    """Return ``(X, single)``, with X a float (N, n) array."""
    X = np.asarray(x, dtype=float)
    single = X.ndim == 1
    X = np.atleast_2d(X)
    if n is not None and X.shape[1] != n:
        raise DimensionError(f"expected points of dimension {n}, got {X.shape[1]}")
    return X, single


def check_dimension(n):
    if n not in (2, 3):
        raise DimensionError(f"dimension must be 2 or 3, got {n}")
    return n


def fd_gradient(f, X, h, order=2):
    X = np.asarray(X, dtype=float)
    n = X.shape[1]
    cols = []
    for a in range(n):
        e = np.zeros(n)
        e[a] = h
        acc = 0.0
        for step, w in _FIRST_DIFF[order]:
            acc = acc + w * (f(X + step * e) - f(X - step * e))
        cols.append(acc / h)
    return np.stack(cols, axis=1)


def fd_hessian(f, X, h, order=2):
    X = np.asarray(X, dtype=float)
    n = X.shape[1]
    if order != 2:
        H = fd_gradient(lambda Y: fd_gradient(f, Y, h, order), X, h, order)
        return 0.5 * (H + np.swapaxes(H, 1, 2))
    f0 = f(X)
    rows = [[None] * n for _ in range(n)]
    for a in range(n):
        ea = np.zeros(n)
        ea[a] = h
        rows[a][a] = (f(X + ea) - 2.0 * f0 + f(X - ea)) / (h * h)
        for b in range(a + 1, n):
            eb = np.zeros(n)
            eb[b] = h
            mixed = (
                f(X + ea + eb) - f(X + ea - eb) - f(X - ea + eb) + f(X - ea - eb)
            ) / (4.0 * h * h)
            rows[a][b] = rows[b][a] = mixed
    return np.stack([np.stack(r, axis=1) for r in rows], axis=1)


class SmoothField:
    """A tensor-valued field on a subset of R^n.

    Args:
        fn: callable ``X (N, n) -> (N, *shape)``.
        n: spatial dimension (2 or 3).
        shape: value shape, ``()`` for scalars.
        grad, hess: optional analytic partials with the layouts described in
            the module docstring.  Without ``grad`` the field is in FD mode.
        max_order: highest derivative order callers may request.
        h_fd, fd_order: finite-difference step and accuracy order.
        name: label used in reports.
    """

    is_euclidean = False

    def __init__(self, fn, n, shape=(), grad=None, hess=None, *, max_order=2,
                 h_fd=1e-4, fd_order=2, name=""):
        self.n = check_dimension(n)
        self.shape = tuple(shape)
        self._fn = fn
        self._grad = grad
        self._hess = hess
        self.max_order = max_order
        self.h_fd = h_fd
        self.fd_order = fd_order
        self.name = name

    @property
    def derivative_mode(self):
        return ANALYTIC if self._grad is not None else FD

    def __repr__(self):
        return f"SmoothField({self.name or 'anonymous'}, n={self.n}, shape={self.shape}, {self.derivative_mode})"

    # outputs are made C-contiguous: einsum picks its summation order from
    # the memory layout, and equal fields must give bit-equal operators
    def values(self, X):
        return np.ascontiguousarray(self._fn(X))

    def __call__(self, x):
        X, single = as_points(x, self.n)
        v = self.values(X)
        return v[0] if single else v

    def grad(self, x):
        if self.max_order < 1:
            raise FieldOrderError(f"{self.name or 'field'} has no first derivatives")
        X, single = as_points(x, self.n)
        if self._grad is not None:
            d = self._grad(X)
        else:
            d = fd_gradient(self._fn, X, self.h_fd, self.fd_order)
        d = np.ascontiguousarray(d)
        return d[0] if single else d

    def hess(self, x):
        if self.max_order < 2:
            raise FieldOrderError(f"{self.name or 'field'} has no second derivatives")
        X, single = as_points(x, self.n)
        if self._hess is not None:
            d = self._hess(X)
        elif self._grad is not None:
            H = fd_gradient(self._grad, X, self.h_fd, self.fd_order)
            d = 0.5 * (H + np.swapaxes(H, 1, 2))
        else:
            d = fd_hessian(self._fn, X, self.h_fd, self.fd_order)
        d = np.ascontiguousarray(d)
        return d[0] if single else d

    def fd_twin(self, h_fd=None, fd_order=None):
        """Same evaluator with partials forced to finite differences."""
        return SmoothField(self._fn, self.n, self.shape, max_order=self.max_order,
                           h_fd=self.h_fd if h_fd is None else h_fd,
                           fd_order=self.fd_order if fd_order is None else fd_order,
                           name=f"{self.name}[fd]")


def _expand(s, ndim):
    """Reshape a batch of scalars so it broadcasts against ``ndim`` trailing axes."""
    return s.reshape(s.shape + (1,) * ndim)


def constant_field(value, n, name="constant"):
    value = np.asarray(value, dtype=float)
    shape = value.shape

    def fn(X):
        return np.broadcast_to(value, (X.shape[0],) + shape).copy()

    def grad(X):
        return np.zeros((X.shape[0], n) + shape)

    def hess(X):
        return np.zeros((X.shape[0], n, n) + shape)

    return SmoothField(fn, n, shape, grad, hess, name=name)


def scaled(s, f, power=1.0, name=None):
    """The field ``s**power * f`` for a scalar field ``s``.

    Partials follow the product rule when both factors are analytic;
    otherwise the result is an FD field on the composed evaluator.
    """
    if s.shape != ():
        raise ValueError("scaling factor must be scalar-valued")
    k = len(f.shape)
    p = float(power)
    label = name or f"{s.name}^{p:g}*{f.name}"

    def fn(X):
        return _expand(s.values(X) ** p, k) * f.values(X)

    if s.derivative_mode == FD or f.derivative_mode == FD:
        return SmoothField(fn, f.n, f.shape, max_order=min(s.max_order, f.max_order),
                           h_fd=COMPOSED_H_FD, fd_order=COMPOSED_FD_ORDER, name=label)

    def parts(X):
        sv = s.values(X)
        S = sv ** p
        dS = (p * sv ** (p - 1.0))[:, None] * s.grad(X)
        return sv, S, dS

    def grad(X):
        _, S, dS = parts(X)
        F, dF = f.values(X), f.grad(X)
        return _expand(dS, k) * F[:, None] + _expand(S, k + 1) * dF

    def hess(X):
        sv, S, dS = parts(X)
        ds, dds = s.grad(X), s.hess(X)
        ddS = (p * (p - 1.0) * sv ** (p - 2.0))[:, None, None] * ds[:, :, None] * ds[:, None, :]
        ddS = ddS + (p * sv ** (p - 1.0))[:, None, None] * dds
        F, dF, ddF = f.values(X), f.grad(X), f.hess(X)
        out = _expand(ddS, k) * F[:, None, None]
        out = out + _expand(dS, k)[:, :, None] * dF[:, None, :]
        out = out + _expand(dS, k)[:, None, :] * dF[:, :, None]
        return out + _expand(S, k + 2) * ddF

    return SmoothField(fn, f.n, f.shape, grad, hess,
                       max_order=min(s.max_order, f.max_order), name=label)


def product(a, b, name=None):
    """Pointwise product of two scalar fields."""
    return scaled(a, b, 1.0, name=name or f"{a.name}*{b.name}")


class SpacetimeField:
    """A vector field ``u(t, x)``.

    Args:
        fn: ``(t, X) -> (N, n)``.
        grad, hess: optional analytic spatial partials ``(t, X) -> ...``.
        dtt: optional analytic second time derivative ``(t, X) -> (N, n)``.
        h_t: time step for the FD fallback of ``dtt``.
    """

    def __init__(self, fn, n, grad=None, hess=None, dtt=None, *, h_t=1e-4,
                 h_fd=1e-4, name=""):
        self.n = check_dimension(n)
        self._fn, self._grad, self._hess, self._dtt = fn, grad, hess, dtt
        self.h_t, self.h_fd, self.name = h_t, h_fd, name

    def at(self, t):
        g = None if self._grad is None else (lambda X: self._grad(t, X))
        h = None if self._hess is None else (lambda X: self._hess(t, X))
        return SmoothField(lambda X: self._fn(t, X), self.n, (self.n,), g, h,
                           h_fd=self.h_fd, name=f"{self.name}(t={t:g})")

    def dtt(self, t, x):
        X, single = as_points(x, self.n)
        if self._dtt is not None:
            v = self._dtt(t, X)
        else:
            k = self.h_t
            v = (self._fn(t + k, X) - 2.0 * self._fn(t, X) + self._fn(t - k, X)) / (k * k)
        return v[0] if single else v
