"""Stiffness tensors, metrics and the (rho, c, g) material triple.

Stiffness values are dense ``(n, n, n, n)`` arrays (optionally with leading
batch axes); Voigt matrices appear only at IO boundaries and inside the
positivity eigenproblem.
"""

import itertools
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.stats import qmc

from .errors import MetricError, PositivityError, SymmetryError
from .fields import SmoothField, check_dimension, constant_field

EPS_SPD = 1e-10
DEFAULT_PROBES = 128

VOIGT_PAIRS = {
    2: ((0, 0), (1, 1), (0, 1)),
    3: ((0, 0), (1, 1), (2, 2), (1, 2), (0, 2), (0, 1)),
}


def isotropic_stiffness(lambda_lame, mu_lame, n, check=True):
    """``lambda d_ij d_kl + mu (d_ik d_jl + d_il d_jk)``.

    With ``check=True`` a non-positive shear modulus or a non-positive P-wave
    modulus ``lambda + 2 mu`` raises :class:`PositivityError`.
    """
    check_dimension(n)
    if check and (mu_lame <= 0 or lambda_lame + 2 * mu_lame <= 0):
        raise PositivityError(f"invalid Lame pair lambda={lambda_lame}, mu={mu_lame}")
    d = np.eye(n)
    return (lambda_lame * np.einsum("ij,kl->ijkl", d, d)
            + mu_lame * (np.einsum("ik,jl->ijkl", d, d) + np.einsum("il,jk->ijkl", d, d)))


def wave_speeds(lambda_lame, mu_lame, rho):
    """Isotropic (c_P, c_S)."""
    return np.sqrt((lambda_lame + 2 * mu_lame) / rho), np.sqrt(mu_lame / rho)


_PERMS = ((1, 0, 2, 3), (0, 1, 3, 2), (2, 3, 0, 1))


def _permuted(c, perm):
    lead = c.ndim - 4
    return np.transpose(c, tuple(range(lead)) + tuple(lead + p for p in perm))


def symmetry_defect(c):
    c = np.asarray(c, dtype=float)
    return max(float(np.max(np.abs(c - _permuted(c, p)), initial=0.0)) for p in _PERMS)


def check_symmetry(c, tol=0.0):
    """True iff the minor and major symmetries hold to ``tol``."""
    return symmetry_defect(c) <= tol


@lru_cache(maxsize=None)
def _canonical_index(n):
    """Flat index of the orbit representative for every (i, j, k, l)."""
    out = np.empty((n,) * 4, dtype=np.intp)
    for idx in itertools.product(range(n), repeat=4):
        i, j, k, l = idx
        orbit = [(i, j, k, l), (j, i, k, l), (i, j, l, k), (j, i, l, k)]
        orbit += [(o[2], o[3], o[0], o[1]) for o in orbit]
        rep = min(orbit)
        out[idx] = np.ravel_multi_index(rep, (n,) * 4)
    return out


def symmetrize(c):
    """Project onto the symmetric subspace; the output is exactly symmetric."""
    c = np.asarray(c, dtype=float)
    avg = c.copy()
    for p in ((1, 0, 2, 3), (0, 1, 3, 2), (1, 0, 3, 2)):
        avg = avg + _permuted(c, p)
    avg = avg + _permuted(avg, (2, 3, 0, 1))
    avg = avg / 8.0
    return enforce_symmetry(avg)


def enforce_symmetry(c):
    """Copy each orbit representative over its orbit (no averaging)."""
    c = np.asarray(c, dtype=float)
    n = c.shape[-1]
    lead = c.shape[:-4]
    flat = c.reshape(lead + (n ** 4,))
    return flat[..., _canonical_index(n)]


@lru_cache(maxsize=None)
def _sym_basis(n):
    """Frobenius-orthonormal basis of symmetric n x n matrices."""
    basis = []
    for i in range(n):
        for j in range(i, n):
            E = np.zeros((n, n))
            if i == j:
                E[i, i] = 1.0
            else:
                E[i, j] = E[j, i] = 1.0 / np.sqrt(2.0)
            basis.append(E)
    return np.array(basis)


def check_metric(g, eps_spd=EPS_SPD):
    g = np.asarray(g, dtype=float)
    if not np.allclose(g, np.swapaxes(g, -1, -2), rtol=0, atol=1e-12 * max(1.0, np.abs(g).max())):
        raise MetricError("metric is not symmetric")
    w = np.linalg.eigvalsh(0.5 * (g + np.swapaxes(g, -1, -2)))
    if np.any(w <= eps_spd):
        raise MetricError(f"metric is not positive definite (min eigenvalue {w.min():.3e})")
    return g


def metric_det(g):
    """Closed-form determinant for n <= 3 (scales exactly under powers of 2)."""
    g = np.asarray(g, dtype=float)
    if g.shape[-1] == 2:
        return g[..., 0, 0] * g[..., 1, 1] - g[..., 0, 1] * g[..., 1, 0]
    if g.shape[-1] == 3:
        return (g[..., 0, 0] * (g[..., 1, 1] * g[..., 2, 2] - g[..., 1, 2] * g[..., 2, 1])
                - g[..., 0, 1] * (g[..., 1, 0] * g[..., 2, 2] - g[..., 1, 2] * g[..., 2, 0])
                + g[..., 0, 2] * (g[..., 1, 0] * g[..., 2, 1] - g[..., 1, 1] * g[..., 2, 0]))
    return np.linalg.det(g)


def positivity_margin(c, g):
    """Best delta in ``c(A, A) >= delta |A|_g^2`` over symmetric A (batched).

    Solved as the smallest generalized eigenvalue of the two quadratic forms
    restricted to symmetric matrices (dimension n(n+1)/2).
    """
    c = np.asarray(c, dtype=float)
    g = check_metric(g)
    n = c.shape[-1]
    E = _sym_basis(n)
    ginv = np.linalg.inv(g)
    C = np.einsum("aij,...ijkl,bkl->...ab", E, c, E)
    G = np.einsum("aij,...jk,...il,bkl->...ab", E, ginv, ginv, E)
    C = 0.5 * (C + np.swapaxes(C, -1, -2))
    Lc = np.linalg.cholesky(G)
    Li = np.linalg.inv(Lc)
    M = Li @ C @ np.swapaxes(Li, -1, -2)
    return np.linalg.eigvalsh(0.5 * (M + np.swapaxes(M, -1, -2)))[..., 0]


def check_positivity(c, g):
    """Largest delta for a single stiffness value; delta <= 0 signals failure."""
    return float(positivity_margin(c, g))


def voigt_pack(c, tol=1e-12):
    c = np.asarray(c, dtype=float)
    n = c.shape[-1]
    scale = max(1.0, float(np.abs(c).max(initial=0.0)))
    if not check_symmetry(c, tol * scale):
        raise SymmetryError("stiffness lacks minor/major symmetry; cannot pack")
    pairs = VOIGT_PAIRS[n]
    return np.array([[c[i, j, k, l] for (k, l) in pairs] for (i, j) in pairs])


def voigt_unpack(M):
    M = np.asarray(M, dtype=float)
    size = M.shape[0]
    n = {3: 2, 6: 3}.get(size)
    if n is None or M.shape != (size, size):
        raise ValueError(f"Voigt matrix must be 3x3 or 6x6, got {M.shape}")
    if not np.allclose(M, M.T, rtol=0, atol=1e-12 * max(1.0, np.abs(M).max())):
        raise SymmetryError("Voigt matrix is not symmetric")
    index = {}
    for a, (i, j) in enumerate(VOIGT_PAIRS[n]):
        index[(i, j)] = index[(j, i)] = a
    c = np.empty((n,) * 4)
    for i, j, k, l in itertools.product(range(n), repeat=4):
        c[i, j, k, l] = M[index[(i, j)], index[(k, l)]]
    return c


def probe_points(bounds, count=DEFAULT_PROBES, seed=0, margin=0.02):
    """Scrambled-Sobol interior points of an axis-aligned box.

    ``margin`` is the fraction of each side kept clear of the boundary.
    """
    bounds = np.asarray(bounds, dtype=float)
    n = bounds.shape[0]
    sampler = qmc.Sobol(d=n, scramble=True, seed=seed)
    U = sampler.random(count)
    lo, hi = bounds[:, 0], bounds[:, 1]
    width = hi - lo
    return lo + width * (margin + (1 - 2 * margin) * U)


def euclidean_metric(n):
    g = constant_field(np.eye(n), n, name="euclidean")
    g.is_euclidean = True
    return g


@dataclass(frozen=True)
class MaterialTriple:
    """Density, stiffness and metric fields defining one elastic medium."""

    rho: SmoothField
    c: SmoothField
    g: SmoothField

    def __post_init__(self):
        n = self.rho.n
        if self.c.n != n or self.g.n != n:
            raise ValueError("rho, c and g must share one dimension")
        if self.rho.shape != () or self.c.shape != (n,) * 4 or self.g.shape != (n, n):
            raise ValueError("field shapes do not match (scalar, rank-4, rank-2)")

    @property
    def n(self):
        return self.rho.n

    @property
    def euclidean(self):
        return bool(self.g.is_euclidean)

    def positivity(self, X):
        return positivity_margin(self.c.values(X), self.g.values(X))

    def validate(self, points, density_floor=0.0, sym_tol=1e-10):
        """Raise on the first invariant violated at ``points``; return min delta."""
        X = np.atleast_2d(np.asarray(points, dtype=float))
        rho = self.rho.values(X)
        if not np.all(np.isfinite(rho)) or np.min(rho) <= density_floor:
            raise PositivityError(f"density not positive (min {np.min(rho):.3e})")
        cv = self.c.values(X)
        scale = max(1.0, float(np.abs(cv).max()))
        if not check_symmetry(cv, sym_tol * scale):
            raise SymmetryError("stiffness lacks minor/major symmetry at probe points")
        delta = self.positivity(X)
        if np.min(delta) <= 0:
            raise PositivityError(f"stiffness not positive (min delta {np.min(delta):.3e})")
        return float(np.min(delta))
