"""Pointwise elastic operators and the residuals that certify the invariance
identities.

All functions accept a single point or an (N, n) batch.  Index layout for
partials follows :mod:`elastogauge.fields`: ``du[N, k, m] = d_k u^m`` and
``ddu[N, j, k, m] = d_j d_k u^m``.
"""

from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize, minimize_scalar

from .errors import (DegenerateSlownessError, FieldOrderError, GaugeError,
                     MetricError)
from .fields import SmoothField, as_points, constant_field
from .geometry import (black_pushforward, pullback_vector_values,
                       pushforward_metric, pushforward_scalar,
                       pushforward_stiffness, pushforward_vector,
                       square_pushforward)
from .tensor_core import MaterialTriple, euclidean_metric

TOL_LEGENDRE = 1e-8


@dataclass(frozen=True)
class OperatorResidual:
    """Residual vectors and the reference magnitudes used to normalise them."""

    value: np.ndarray
    scale: np.ndarray

    @property
    def relative(self):
        v = np.atleast_2d(self.value)
        s = np.atleast_1d(self.scale)
        return np.max(np.abs(v), axis=-1) / s

    @property
    def max_relative(self):
        return float(np.max(self.relative))


def _norm_inf(v):
    return np.max(np.abs(np.atleast_2d(v)), axis=-1)


def _scale(*terms):
    s = np.max(np.stack([_norm_inf(t) for t in terms]), axis=0)
    return np.maximum(s, np.finfo(float).tiny)


def _require(field, order, what):
    if field.max_order < order:
        raise FieldOrderError(f"{what} needs order-{order} derivatives")


# -- elastic Laplacians ----------------------------------------------------------

def elastic_laplacian_div(c, g, u, x):
    """``(1/sqrt|g|) d_j (sqrt|g| c^{ijkl} g_lm d_k u^m)`` expanded by the
    product rule (first partials of c and g, second of u)."""
    _require(c, 1, "stiffness")
    _require(g, 1, "metric")
    _require(u, 2, "displacement")
    X, single = as_points(x, u.n)
    cv, dc = c.values(X), c.grad(X)
    gv, dg = g.values(X), g.grad(X)
    du, ddu = u.grad(X), u.hess(X)
    det = np.linalg.det(gv)
    if np.any(det <= 0):
        raise MetricError("degenerate metric")
    ginv = np.linalg.inv(gv)
    dlog = 0.5 * np.einsum("Nab,Njab->Nj", ginv, dg)
    K = np.einsum("Nijkl,Nlm->Nijkm", cv, gv)
    dK = np.einsum("Njijkl,Nlm->Nikm", dc, gv) + np.einsum("Nijkl,Njlm->Nikm", cv, dg)
    out = (np.einsum("Nj,Nijkm,Nkm->Ni", dlog, K, du)
           + np.einsum("Nikm,Nkm->Ni", dK, du)
           + np.einsum("Nijkm,Njkm->Ni", K, ddu))
    return out[0] if single else out


def christoffel_symbols(g, X):
    """``Gamma[N, a, b, c] = Gamma^a_{bc}`` of the Levi-Civita connection."""
    gv, dg = g.values(X), g.grad(X)
    ginv = np.linalg.inv(gv)
    # lowered: Gamma_{dbc} = 1/2 (d_b g_dc + d_c g_db - d_d g_bc); dg[N, e, a, b] = d_e g_ab
    low = 0.5 * (np.einsum("Nbdc->Ndbc", dg) + np.einsum("Ncdb->Ndbc", dg)
                 - np.einsum("Ndbc->Ndbc", dg))
    return np.einsum("Nad,Ndbc->Nabc", ginv, low)


def _christoffel_grad(g, X):
    """``dGamma[N, e, a, b, c] = d_e Gamma^a_{bc}``."""
    gv, dg, ddg = g.values(X), g.grad(X), g.hess(X)
    ginv = np.linalg.inv(gv)
    low = 0.5 * (np.einsum("Nbdc->Ndbc", dg) + np.einsum("Ncdb->Ndbc", dg) - dg)
    dlow = 0.5 * (np.einsum("Nebdc->Nedbc", ddg) + np.einsum("Necdb->Nedbc", ddg) - ddg)
    dginv = -np.einsum("Nap,Nepq,Nqd->Nead", ginv, dg, ginv)
    return np.einsum("Nead,Ndbc->Neabc", dginv, low) + np.einsum("Nad,Nedbc->Neabc", ginv, dlow)


def elastic_laplacian_cov(c, g, u, x):
    """``nabla_j (c^{ijkl} g_lm nabla_k u^m)`` with the Levi-Civita connection.

    Needs second partials of g (for the derivative of the connection).
    """
    _require(c, 1, "stiffness")
    _require(g, 2, "metric")
    _require(u, 2, "displacement")
    X, single = as_points(x, u.n)
    cv, dc = c.values(X), c.grad(X)
    gv, dg = g.values(X), g.grad(X)
    uv, du, ddu = u.values(X), u.grad(X), u.hess(X)
    G = christoffel_symbols(g, X)
    dG = _christoffel_grad(g, X)
    Du = du + np.einsum("Nmkp,Np->Nkm", G, uv)                       # nabla_k u^m
    dDu = (ddu + np.einsum("Njmkp,Np->Njkm", dG, uv)
           + np.einsum("Nmkp,Njp->Njkm", G, du))                      # d_j nabla_k u^m
    K = np.einsum("Nijkl,Nlm->Nijkm", cv, gv)
    dK = np.einsum("Njijkl,Nlm->Nikm", dc, gv) + np.einsum("Nijkl,Njlm->Nikm", cv, dg)
    T = np.einsum("Nijkm,Nkm->Nij", K, Du)
    divT = np.einsum("Nikm,Nkm->Ni", dK, Du) + np.einsum("Nijkm,Njkm->Ni", K, dDu)
    out = divT + np.einsum("Nijp,Npj->Ni", G, T) + np.einsum("Njjp,Nip->Ni", G, T)
    return out[0] if single else out


LAPLACIANS = {"div": elastic_laplacian_div, "cov": elastic_laplacian_cov}


def spatial_operator(triple, u, x, form="div"):
    """The spatial part ``-rho^-1 L u`` of the wave operator."""
    X, single = as_points(x, triple.n)
    out = -LAPLACIANS[form](triple.c, triple.g, u, X) / triple.rho.values(X)[:, None]
    return out[0] if single else out


def wave_residual(triple, u, t, x, form="div"):
    """``d_t^2 u - rho^-1 L u`` for a :class:`SpacetimeField` at time ``t``."""
    X, single = as_points(x, triple.n)
    out = u.dtt(t, X) + spatial_operator(triple, u.at(t), X, form)
    return out[0] if single else out


# -- Christoffel matrix, principal symbol, qP norms ------------------------------------

@dataclass(frozen=True)
class ChristoffelMatrix:
    """``Gamma^i_m = rho^-1 c^{ijkl} g_lm p_j p_k`` at one point."""

    entries: np.ndarray
    x: np.ndarray
    p: np.ndarray
    metric: np.ndarray

    def lowered(self):
        return self.metric @ self.entries

    def eigenvalues(self):
        return np.sort(np.linalg.eigvals(self.entries).real)


def _check_slowness(p):
    p = np.asarray(p, dtype=float)
    if not np.any(p):
        raise DegenerateSlownessError("slowness covector must be nonzero")
    return p


def christoffel_matrix(triple, x, p):
    p = _check_slowness(p)
    x = np.asarray(x, dtype=float)
    rho, c, g = triple.rho(x), triple.c(x), triple.g(x)
    G = np.einsum("ijkl,lm,j,k->im", c, g, p, p) / rho
    return ChristoffelMatrix(G, x, p, g)


def _acoustic_tensor(rho, c, P):
    """``A^{il} = rho^-1 c^{ijkl} p_j p_k`` for batches of points and slownesses."""
    return np.einsum("...ijkl,...j,...k->...il", c, P, P) / rho[..., None, None]


def lambda_max_sym(M):
    """Largest eigenvalue of symmetric 2x2 (closed form) or 3x3 matrices."""
    n = M.shape[-1]
    if n == 2:
        a, b, d = M[..., 0, 0], 0.5 * (M[..., 0, 1] + M[..., 1, 0]), M[..., 1, 1]
        return 0.5 * (a + d) + np.sqrt(0.25 * (a - d) ** 2 + b * b)
    return np.linalg.eigvalsh(0.5 * (M + np.swapaxes(M, -1, -2)))[..., -1]


def christoffel_lambda_max(rho, c, g, P):
    """Largest eigenvalue of ``Gamma = A g``, via ``L^T A L`` with ``g = L L^T``."""
    A = _acoustic_tensor(rho, c, P)
    L = np.linalg.cholesky(g)
    M = np.swapaxes(L, -1, -2) @ A @ L
    return lambda_max_sym(M)


def principal_symbol(triple, omega, p, x):
    """``omega^2 (Gamma(x, p) - I)``."""
    G = christoffel_matrix(triple, x, p).entries
    return omega ** 2 * (G - np.eye(triple.n))


def _symbol_xi(rho, c, g, omega, xi):
    return -omega ** 2 * np.eye(len(xi)) + np.einsum("ijkl,lm,j,k->im", c, g, xi, xi) / rho


def qp_conorm(triple, x, p):
    p = _check_slowness(p)
    x = np.asarray(x, dtype=float)
    lam = christoffel_lambda_max(np.asarray(triple.rho(x)), triple.c(x), triple.g(x), p)
    return float(np.sqrt(lam))


def _fibonacci_sphere(count):
    i = np.arange(count) + 0.5
    phi = np.arccos(1 - 2 * i / count)
    theta = np.pi * (1 + 5 ** 0.5) * i
    return np.stack([np.cos(theta) * np.sin(phi), np.sin(theta) * np.sin(phi), np.cos(phi)], axis=1)


def qp_norm(triple, x, v, tol=TOL_LEGENDRE):
    """``sup { <p, v> : qp_conorm(p) = 1 }`` by maximisation over directions."""
    v = np.asarray(v, dtype=float)
    if not np.any(v):
        raise DegenerateSlownessError("vector must be nonzero")
    x = np.asarray(x, dtype=float)
    rho, c, g = np.asarray(triple.rho(x)), triple.c(x), triple.g(x)
    n = triple.n

    def ratio(P):
        P = np.atleast_2d(P)
        lam = christoffel_lambda_max(np.broadcast_to(rho, P.shape[:1]), c, g, P)
        return (P @ v) / np.sqrt(lam)

    if n == 2:
        theta = np.linspace(0.0, 2 * np.pi, 720, endpoint=False)
        vals = ratio(np.stack([np.cos(theta), np.sin(theta)], axis=1))
        k = int(np.argmax(vals))
        step = theta[1] - theta[0]
        res = minimize_scalar(lambda t: -ratio(np.array([np.cos(t), np.sin(t)]))[0],
                              bounds=(theta[k] - step, theta[k] + step), method="bounded",
                              options={"xatol": tol})
        return float(-res.fun)
    dirs = _fibonacci_sphere(10_000)
    vals = ratio(dirs)
    best = dirs[int(np.argmax(vals))]

    def neg(q):
        return -ratio(q / np.linalg.norm(q))[0]

    res = minimize(neg, best, method="Nelder-Mead",
                   options={"xatol": tol, "fatol": tol * 1e-2, "maxiter": 4000})
    return float(max(-res.fun, vals.max()))


# -- scaling identity -------------------------------------------------------------

def _scaling_product_grad(mu, lam, X, n):
    """Value and gradient of ``mu lam^((2+n)/2)``."""
    q = (2.0 + n) / 2.0
    m, l = mu.values(X), lam.values(X)
    dm, dl = mu.grad(X), lam.grad(X)
    return m * l ** q, (l ** q)[:, None] * dm + (q * m * l ** (q - 1.0))[:, None] * dl


def _check_gauge_values(mu, lam, X):
    if np.any(mu.values(X) == 0):
        raise GaugeError("mu vanishes at an evaluation point")
    if np.any(lam.values(X) <= 0):
        raise GaugeError("lambda must be positive (it scales a metric)")


def scaling_q_term(triple, mu, lam, u, x):
    """``Q u`` assembled directly from its closed form."""
    X, single = as_points(x, triple.n)
    n = triple.n
    _check_gauge_values(mu, lam, X)
    q = (2.0 + n) / 2.0
    _, dprod = _scaling_product_grad(mu, lam, X, n)
    coef = lam.values(X) ** (-q) / (mu.values(X) * triple.rho.values(X))
    cg = np.einsum("Nijkl,Nlm->Nijkm", triple.c.values(X), triple.g.values(X))
    out = coef[:, None] * np.einsum("Nijkm,Nj,Nkm->Ni", cg, dprod, u.grad(X))
    return out[0] if single else out


def scaled_triple(triple, mu, lam):
    """``(lam mu rho, mu c, lam g)`` with analytic product-rule partials."""
    from .fields import product, scaled

    return MaterialTriple(product(lam, product(mu, triple.rho)), scaled(mu, triple.c),
                          scaled(lam, triple.g))


def scaling_identity_parts(triple, mu, lam, u, x):
    """``(lhs, base, Q u)`` with ``lhs = (lam mu rho)^-1 L_{mu c, lam g} u`` and
    ``base = rho^-1 L_{c,g} u``."""
    X, _ = as_points(x, triple.n)
    _check_gauge_values(mu, lam, X)
    big = scaled_triple(triple, mu, lam)
    lhs = elastic_laplacian_div(big.c, big.g, u, X) / big.rho.values(X)[:, None]
    base = elastic_laplacian_div(triple.c, triple.g, u, X) / triple.rho.values(X)[:, None]
    return lhs, base, scaling_q_term(triple, mu, lam, u, X)


def scaling_identity_residual(triple, mu, lam, u, x):
    """``(lam mu rho)^-1 L_{mu c, lam g} u - [rho^-1 L_{c,g} u + Q u]``."""
    single = np.ndim(x) == 1
    lhs, base, q = scaling_identity_parts(triple, mu, lam, u, x)
    value = lhs - (base + q)
    res = OperatorResidual(value, _scale(lhs, base, q))
    return res if not single else OperatorResidual(value[0], res.scale[0])


# -- invariance residuals -----------------------------------------------------------

def pushforward_triple(triple, phi):
    return MaterialTriple(pushforward_scalar(triple.rho, phi),
                          pushforward_stiffness(triple.c, phi),
                          pushforward_metric(triple.g, phi))


def coord_invariance_residual(triple, phi, u, x, form="cov"):
    """``P u - phi^* P' phi_* u`` with ``P'`` built from the pushed triple.

    ``form`` selects the Laplacian; only the covariant form is invariant under
    non-affine maps (both agree for affine maps and constant metrics).
    """
    X, single = as_points(x, triple.n)
    lhs = spatial_operator(triple, u, X, form)
    pushed = pushforward_triple(triple, phi)
    Y = phi.forward(X)
    image = spatial_operator(pushed, pushforward_vector(u, phi), Y, form)
    rhs = pullback_vector_values(image, phi, X)
    value = lhs - rhs
    res = OperatorResidual(value, _scale(lhs, rhs))
    return res if not single else OperatorResidual(value[0], res.scale[0])


def conformal_invariance_residual(rho, c, phi, u, x, points=None):
    """Euclidean ``P_(rho,c) u - phi^* P_(square rho, square c) phi_* u``."""
    n = c.n
    X, single = as_points(x, n)
    gE = euclidean_metric(n)
    rho_sq, c_sq = square_pushforward(rho, c, phi, points if points is not None else X)
    lhs = spatial_operator(MaterialTriple(rho, c, gE), u, X)
    image = spatial_operator(MaterialTriple(rho_sq, c_sq, gE), pushforward_vector(u, phi),
                             phi.forward(X))
    rhs = pullback_vector_values(image, phi, X)
    value = lhs - rhs
    res = OperatorResidual(value, _scale(lhs, rhs))
    return res if not single else OperatorResidual(value[0], res.scale[0])


def principal_conformal_check(rho, c, phi, omega, p, x, points=None):
    """Compare the Euclidean principal symbol of ``(rho, c)`` with that of
    ``(1, rho^-1 c)`` and with the conjugated symbol of
    ``(1, black(rho^-1 c))`` at the image point and transformed slowness."""
    n = c.n
    x = np.asarray(x, dtype=float)
    p = np.asarray(p, dtype=float)
    xi = omega * p
    I = np.eye(n)
    r, cv = float(rho(x)), c(x)
    s1 = _symbol_xi(r, cv, I, omega, xi)
    s2 = _symbol_xi(1.0, cv / r, I, omega, xi)
    a = SmoothField(lambda X: c.values(X) / rho.values(X)[:, None, None, None, None], n,
                    c.shape, max_order=0, name="a")
    a_black = black_pushforward(a, phi, points if points is not None else x[None])
    J = phi.jacobian(x)
    xi_img = xi @ np.linalg.inv(J)
    s_img = _symbol_xi(1.0, a_black(phi(x)), I, omega, xi_img)
    s3 = np.linalg.solve(J, s_img @ J)
    value = np.concatenate([(s1 - s2).ravel(), (s1 - s3).ravel()])
    return OperatorResidual(value, max(float(np.abs(s1).max()), np.finfo(float).tiny))


def unit_field(n):
    return constant_field(1.0, n, name="one")
