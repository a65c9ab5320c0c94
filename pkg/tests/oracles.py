"""Independent symbolic oracles (sympy) for the pointwise operators.

Everything here is written from the defining formulas, index by index, with
no code shared with the package.
"""

import functools

import numpy as np
import sympy as sp

x1, x2 = sp.symbols("x1 x2", real=True)
X = (x1, x2)
N = 2


def delta(a, b):
    return 1 if a == b else 0


def iso_c(lam, mu):
    return [[[[lam * delta(i, j) * delta(k, l) + mu * (delta(i, k) * delta(j, l) + delta(i, l) * delta(j, k))
               for l in range(N)] for k in range(N)] for j in range(N)] for i in range(N)]


def default_media():
    """Symbolic twins of the package's standard Riemannian medium."""
    lam = 2 + sp.Rational(3, 10) * x1 + sp.Rational(1, 10) * x2
    mu = 1 + sp.Rational(1, 10) * x1 - sp.Rational(2, 10) * x2
    c = iso_c(lam, mu)
    rho = 1 + sp.Rational(2, 10) * x1 + sp.Rational(1, 10) * x2
    g = sp.exp(2 * (sp.Rational(3, 10) * x1 - sp.Rational(2, 10) * x2)) * sp.eye(2)
    u = [sp.sin(x1 + 2 * x2 + sp.Rational(1, 10)),
         sp.Rational(1, 2) * sp.sin(2 * x1 - x2 + sp.Rational(3, 10))]
    return rho, c, g, u


def div_form(c, g, u):
    """``|g|^-1/2 d_j(|g|^1/2 c^{ijkl} g_lm d_k u^m)``."""
    sg = sp.sqrt(g.det())
    out = []
    for i in range(N):
        acc = 0
        for j in range(N):
            flux = sum(c[i][j][k][l] * g[l, m] * sp.diff(u[m], X[k])
                       for k in range(N) for l in range(N) for m in range(N))
            acc += sp.diff(sg * flux, X[j])
        out.append(acc / sg)
    return out


def christoffel(g):
    gi = g.inv()
    return [[[sum(gi[a, q] * (sp.diff(g[q, b], X[cc]) + sp.diff(g[q, cc], X[b]) - sp.diff(g[b, cc], X[q]))
                  for q in range(N)) / 2 for cc in range(N)] for b in range(N)] for a in range(N)]


def cov_form(c, g, u):
    """``nabla_j(c^{ijkl} g_lm nabla_k u^m)`` with the Levi-Civita connection."""
    G = christoffel(g)
    Du = [[sp.diff(u[m], X[k]) + sum(G[m][k][p] * u[p] for p in range(N)) for k in range(N)]
          for m in range(N)]
    T = [[sum(c[i][j][k][l] * g[l, m] * Du[m][k] for k in range(N) for l in range(N) for m in range(N))
          for j in range(N)] for i in range(N)]
    return [sum(sp.diff(T[i][j], X[j]) + sum(G[i][j][p] * T[p][j] + G[j][j][p] * T[i][p] for p in range(N))
                for j in range(N)) for i in range(N)]


def evaluate(exprs, points):
    f = sp.lambdify(X, exprs, "numpy")
    return np.array([np.array(f(*p), dtype=float) for p in points])


@functools.lru_cache(maxsize=None)
def default_div_cov(points_key):
    rho, c, g, u = default_media()
    pts = np.array(points_key)
    return evaluate(div_form(c, g, u), pts), evaluate(cov_form(c, g, u), pts)


def scaling_sides(mu_expr, lam_expr):
    """``((lam mu rho)^-1 L_{mu c, lam g} u, rho^-1 L_{c,g} u, Q u)`` as expressions."""
    rho, c, g, u = default_media()
    muc = [[[[mu_expr * c[i][j][k][l] for l in range(N)] for k in range(N)] for j in range(N)]
           for i in range(N)]
    lhs = [e / (lam_expr * mu_expr * rho) for e in div_form(muc, lam_expr * g, u)]
    base = [e / rho for e in div_form(c, g, u)]
    w = mu_expr * lam_expr ** sp.Rational(N + 2, 2)
    q = [sum(c[i][j][k][l] * g[l, m] * sp.diff(w, X[j]) * sp.diff(u[m], X[k])
             for j in range(N) for k in range(N) for l in range(N) for m in range(N))
         / (lam_expr ** sp.Rational(N + 2, 2) * mu_expr * rho) for i in range(N)]
    return lhs, base, q
