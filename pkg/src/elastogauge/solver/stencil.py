"""Conservative face-flux discretization of the elastic Laplacian.

On the j-faces (midpoints between neighbouring nodes along axis j) the flux
``F^{ij} = K_j^{ikm} G_km`` uses ``K = sqrt|g| c^{ijkl} g_lm`` sampled at the
face midpoint and a discrete gradient ``G_km`` of ``u^m``: the compact
difference across the face for ``k == j``, otherwise the mean of the centered
k-differences at the two adjacent nodes.  The divergence of the fluxes is
taken at interior nodes and divided by ``sqrt|g|`` there.
"""

import numpy as np

from .._backend import get_backend
from ..errors import FieldError, PositivityError
from ..tensor_core import metric_det, positivity_margin


def face_shape(grid, j):
    return tuple(grid.nx[a] - 1 if a == j else grid.nx[a] - 2 for a in range(grid.n))


def face_points(grid, j):
    axes = []
    for a in range(grid.n):
        lo, h = grid.domain[a, 0], grid.h[a]
        if a == j:
            axes.append(lo + h * (np.arange(grid.nx[a] - 1) + 0.5))
        else:
            axes.append(lo + h * np.arange(1, grid.nx[a] - 1))
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


def interior_points(grid):
    mesh = np.meshgrid(*[grid.axis(a)[1:-1] for a in range(grid.n)], indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


def _evaluate(field, X, what):
    try:
        v = np.asarray(field.values(X), dtype=float)
    except Exception as exc:  # noqa: BLE001 - surfaced with context
        raise FieldError(f"evaluating {what} failed: {exc}") from exc
    if not np.all(np.isfinite(v)):
        raise FieldError(f"{what} is not finite at some grid points")
    return v


def flux_coefficients(triple, X):
    """``K[N, i, j, k, m] = sqrt|g| c^{ijkl} g_lm`` (plain ``c`` for the
    Euclidean metric) and the positivity margin at the sample points."""
    c = _evaluate(triple.c, X, "stiffness")
    if triple.euclidean:
        delta = positivity_margin(c, np.eye(triple.n))
        return c, delta
    g = _evaluate(triple.g, X, "metric")
    delta = positivity_margin(c, g)
    sq = np.sqrt(metric_det(g))
    return sq[:, None, None, None, None] * np.einsum("Nijkl,Nlm->Nijkm", c, g), delta


class DiscreteElasticLaplacian:
    """Linear map from node displacements ``(n, *nx)`` to interior values.

    ``apply_flux_divergence`` returns the undivided divergence ``A u``;
    calling the object returns ``L_h u = A u / sqrt|g|`` and
    ``acceleration`` returns ``rho^-1 L_h u``.
    """

    def __init__(self, triple, grid, backend=None):
        if triple.n != grid.n:
            raise ValueError("triple and grid dimensions differ")
        self.triple = triple
        self.grid = grid
        self.n = n = grid.n
        self.backend = get_backend(backend)
        self.fshapes = [face_shape(grid, j) for j in range(n)]
        self.K = []
        deltas = []
        for j in range(n):
            Kf, delta = flux_coefficients(triple, face_points(grid, j))
            deltas.append(delta.min())
            # (N, i, j, k, m) -> (i, k, m, *face_shape) for the j-flux
            Kj = np.ascontiguousarray(np.moveaxis(Kf[:, :, j], 0, -1))
            self.K.append(Kj.reshape((n, n, n) + self.fshapes[j]))
        Xi = interior_points(grid)
        rho = _evaluate(triple.rho, Xi, "density")
        if np.min(rho) <= 0:
            raise PositivityError(f"density not positive on the grid (min {np.min(rho):.3e})")
        ishape = tuple(k - 2 for k in grid.nx)
        if triple.euclidean:
            sq = np.ones(len(Xi))
            cn = _evaluate(triple.c, Xi, "stiffness")
            deltas.append(positivity_margin(cn, np.eye(n)).min())
        else:
            gn = _evaluate(triple.g, Xi, "metric")
            sq = np.sqrt(metric_det(gn))
            deltas.append(positivity_margin(_evaluate(triple.c, Xi, "stiffness"), gn).min())
        self.delta_min = float(min(deltas))
        if self.delta_min <= 0:
            raise PositivityError(f"stiffness not positive on the grid (delta {self.delta_min:.3e})")
        self.rho = rho.reshape(ishape)
        self.sqrt_g = sq.reshape(ishape)
        self.inv_sqrt_g = 1.0 / self.sqrt_g
        self.inv_mass = 1.0 / (self.rho * self.sqrt_g)
        self.ishape = ishape
        if self.backend == "numba":
            self._prepare_numba()

    # -- numpy path ---------------------------------------------------------

    def _flux_numpy(self, u, j):
        n = self.n
        h = self.grid.h
        inner = [slice(1, -1)] * n
        lo = list(inner)
        hi = list(inner)
        lo[j] = slice(0, -1)
        hi[j] = slice(1, None)
        K = self.K[j]
        F = np.zeros((n,) + self.fshapes[j])
        for k in range(n):
            if k == j:
                D = (u[(slice(None),) + tuple(hi)] - u[(slice(None),) + tuple(lo)]) / h[j]
            else:
                def shifted(base, step):
                    s = list(base)
                    s[k] = slice(1 + step, u.shape[1 + k] - 1 + step)
                    return (slice(None),) + tuple(s)
                D = ((u[shifted(lo, 1)] - u[shifted(lo, -1)])
                     + (u[shifted(hi, 1)] - u[shifted(hi, -1)])) * (0.25 / h[k])
            for m in range(n):
                for i in range(n):
                    F[i] += K[i, k, m] * D[m]
        return F

    def _apply_numpy(self, u):
        out = np.zeros((self.n,) + self.ishape)
        for j in range(self.n):
            F = self._flux_numpy(u, j)
            hi = [slice(None)] * (self.n + 1)
            lo = [slice(None)] * (self.n + 1)
            hi[1 + j] = slice(1, None)
            lo[1 + j] = slice(0, -1)
            out += (F[tuple(hi)] - F[tuple(lo)]) / self.grid.h[j]
        return out

    # -- numba path ---------------------------------------------------------

    def _prepare_numba(self):
        n = self.n
        nx = self.grid.nx
        self._strides = np.array([int(np.prod(nx[a + 1:])) for a in range(n)], dtype=np.int64)
        self._Kflat = [np.ascontiguousarray(K.reshape(n, n, n, -1)) for K in self.K]
        sizes = [K.shape[3] for K in self._Kflat]
        offsets = np.concatenate([[0], np.cumsum(sizes)[:-1]]).astype(np.int64)
        self._offsets = offsets
        self._left = []
        for j in range(n):
            idx = np.indices(self.fshapes[j]).reshape(n, -1)
            shift = np.array([0 if a == j else 1 for a in range(n)])[:, None]
            self._left.append(np.ravel_multi_index(idx + shift, nx).astype(np.int64))
        inner = np.indices(self.ishape).reshape(n, -1)  # node index minus one
        right = np.empty((n, inner.shape[1]), dtype=np.int64)
        fstep = np.empty(n, dtype=np.int64)
        for j in range(n):
            idx = inner.copy()
            idx[j] += 1
            right[j] = offsets[j] + np.ravel_multi_index(idx, self.fshapes[j])
            fstep[j] = int(np.prod(self.fshapes[j][j + 1:]))
        self._right, self._fstep = right, fstep
        self._F = np.zeros((n, int(sum(sizes))))
        self._h = np.ascontiguousarray(self.grid.h, dtype=float)

    def _apply_numba(self, u):
        from . import _kernels

        n = self.n
        if n == 2:
            out = np.empty((n,) + self.ishape)
            _kernels.flux_divergence_2d(np.ascontiguousarray(u), self.K[0], self.K[1],
                                        float(self.grid.h[0]), float(self.grid.h[1]), out)
            return out
        uf = np.ascontiguousarray(u).reshape(n, -1)
        for j in range(n):
            a = self._offsets[j]
            buf = np.empty((n, self._Kflat[j].shape[3]))
            _kernels.face_flux(uf, self._Kflat[j], self._left[j], self._strides, j,
                               self._h, buf)
            self._F[:, a:a + buf.shape[1]] = buf
        out = np.empty((n, int(np.prod(self.ishape))))
        _kernels.flux_divergence(self._F, self._right, self._fstep, self._h, out)
        return out.reshape((n,) + self.ishape)

    # -- public -------------------------------------------------------------

    def apply_flux_divergence(self, u):
        u = np.asarray(u, dtype=float)
        if u.shape != (self.n,) + self.grid.nx:
            raise ValueError(f"expected displacement of shape {(self.n,) + self.grid.nx}")
        if self.backend == "numba":
            return self._apply_numba(u)
        return self._apply_numpy(u)

    def __call__(self, u):
        return self.apply_flux_divergence(u) * self.inv_sqrt_g

    def acceleration(self, u):
        return self.apply_flux_divergence(u) * self.inv_mass

    def bilinear(self, u, w):
        """``a_h(u, w) = -h^n sum_interior w . A u`` (symmetric for constant
        coefficients when both fields vanish on the boundary)."""
        Au = self.apply_flux_divergence(u)
        wi = w[(slice(None),) + self.grid.interior]
        return -self.grid.cell_volume * float(np.sum(wi * Au))

    def assemble_dense(self):
        """Matrix of ``A`` restricted to interior degrees of freedom (tests only)."""
        n = self.n
        shape = (n,) + self.grid.nx
        size = n * int(np.prod(self.ishape))
        cols = []
        e = np.zeros(shape)
        interior = (slice(None),) + self.grid.interior
        for col in range(size):
            ei = np.zeros((n,) + self.ishape)
            ei.flat[col] = 1.0
            e[interior] = ei
            cols.append(self.apply_flux_divergence(e).ravel())
        return np.stack(cols, axis=1)
