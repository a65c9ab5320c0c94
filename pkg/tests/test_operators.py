import numpy as np
import pytest
import sympy as sp
from hypothesis import given
from hypothesis import strategies as st

import oracles
from elastogauge import experiments as ex
from elastogauge import families as fam
from elastogauge.errors import (ConformalityError, DegenerateSlownessError, FieldOrderError,
                                GaugeError)
from elastogauge.fields import SmoothField, SpacetimeField, constant_field
from elastogauge.geometry import (affine_map, bump_displacement, identity_map,
                                  linear_conformal)
from elastogauge.operators import (christoffel_matrix, conformal_invariance_residual,
                                   coord_invariance_residual, elastic_laplacian_cov,
                                   elastic_laplacian_div, scaling_q_term, principal_conformal_check,
                                   principal_symbol, qp_conorm, qp_norm,
                                   scaling_identity_parts, scaling_identity_residual,
                                   spatial_operator, wave_residual)
from elastogauge.tensor_core import (MaterialTriple, check_positivity, euclidean_metric,
                                     isotropic_stiffness, probe_points, voigt_unpack)

BOX = np.array([[0.0, 1.0], [0.0, 1.0]])
C_ISO = fam.constant_stiffness(isotropic_stiffness(2.0, 1.0, 2))
GE = euclidean_metric(2)
ONE = constant_field(1.0, 2)
ISO = MaterialTriple(ONE, C_ISO, GE)
RIEM = ex.material_families()["iso_gradient/conformal_exp"]
U = ex.probe_displacement(2)


def pts(count=16, seed=0):
    return probe_points(BOX, count, seed=seed)


def poly(*terms):
    return fam.polynomial_vector(terms, 2)


# -- Laplacians -----------------------------------------------------------------------

def test_div_linear_displacement_vanishes():
    u = poly((0, 1.0, [1, 0]), (1, -2.0, [1, 1]), (1, 0.5, [0, 1]))
    lin = poly((0, 1.0, [1, 0]), (1, 0.5, [0, 1]), (0, 3.0, [0, 1]))
    assert np.abs(elastic_laplacian_div(C_ISO, GE, lin, pts())).max() == 0.0
    # the bilinear term has a mixed second partial, so it must not vanish
    assert np.abs(elastic_laplacian_div(C_ISO, GE, u, pts())).max() > 0.1


def test_div_quadratic_example():
    u = poly((0, 1.0, [2, 0]))
    out = elastic_laplacian_div(C_ISO, GE, u, pts())
    np.testing.assert_array_equal(out, np.broadcast_to([8.0, 0.0], out.shape))


def test_div_sine_example():
    u = fam.trig_vector([1.0, 0.0], [[1.0, 0.0], [0.0, 0.0]], [0.0, 0.0])
    X = pts()
    out = elastic_laplacian_div(C_ISO, GE, u, X)
    np.testing.assert_allclose(out[:, 0], -4.0 * np.sin(X[:, 0]), rtol=1e-14, atol=1e-15)
    np.testing.assert_array_equal(out[:, 1], 0.0)


def test_missing_order_rejected():
    u = SmoothField(lambda X: X.copy(), 2, (2,), max_order=1)
    with pytest.raises(FieldOrderError):
        elastic_laplacian_div(C_ISO, GE, u, pts())
    with pytest.raises(FieldOrderError):
        elastic_laplacian_cov(C_ISO, GE, u, pts())


def test_cov_equals_div_for_euclidean():
    X = pts()
    c = fam.isotropic_gradient(2.0, 1.0, 2, [0.3, 0.1], [0.1, -0.2])
    np.testing.assert_allclose(elastic_laplacian_cov(c, GE, U, X), elastic_laplacian_div(c, GE, U, X),
                               rtol=1e-14, atol=1e-14)
    zero = constant_field(np.zeros(2), 2)
    assert np.abs(elastic_laplacian_cov(c, fam.warped_metric(0.8, 2), zero, X)).max() == 0.0


def test_forms_match_symbolic_oracle():
    X = pts(12, seed=3)
    div_ref, cov_ref = oracles.default_div_cov(tuple(map(tuple, X)))
    div = elastic_laplacian_div(RIEM.c, RIEM.g, U, X)
    cov = elastic_laplacian_cov(RIEM.c, RIEM.g, U, X)
    np.testing.assert_allclose(div, div_ref, rtol=1e-12, atol=1e-12)
    np.testing.assert_allclose(cov, cov_ref, rtol=1e-12, atol=1e-12)


def test_forms_agree_on_conformal_metric():
    """Both coordinate forms of the Laplacian for g = exp(2 x1) g_E."""
    g = fam.conformal_exp_metric([1.0, 0.0], 2)
    c = fam.isotropic_gradient(2.0, 1.0, 2, [0.3, 0.1], [0.1, -0.2])
    X = pts(64)
    a = elastic_laplacian_div(c, g, U, X)
    b = elastic_laplacian_cov(c, g, U, X)
    scale = np.maximum(np.abs(a).max(axis=1), np.abs(b).max(axis=1))
    assert (np.abs(a - b).max(axis=1) / scale).max() <= 1e-8


@given(st.floats(-3, 3), st.floats(-3, 3), st.sampled_from(["div", "cov"]))
def test_operators_linear_in_u(a, b, form):
    v = fam.trig_vector([0.3, 1.0], [[2.0, -1.0], [0.5, 1.0]], [0.2, 0.0])
    combo = SmoothField(lambda X: a * U.values(X) + b * v.values(X), 2, (2,),
                        lambda X: a * U.grad(X) + b * v.grad(X),
                        lambda X: a * U.hess(X) + b * v.hess(X))
    X = pts(8)
    lhs = spatial_operator(RIEM, combo, X, form)
    rhs = a * spatial_operator(RIEM, U, X, form) + b * spatial_operator(RIEM, v, X, form)
    np.testing.assert_allclose(lhs, rhs, rtol=1e-12, atol=1e-12)


# -- wave residual --------------------------------------------------------------------

def test_wave_residual_simple_fields():
    x = np.array([0.3, 0.6])
    lin = SpacetimeField(lambda t, X: np.stack([t * X[:, 0], 0 * X[:, 0]], axis=1), 2,
                         lambda t, X: np.broadcast_to(np.array([[t, 0.0], [0.0, 0.0]]), (len(X), 2, 2)),
                         lambda t, X: np.zeros((len(X), 2, 2, 2)),
                         lambda t, X: np.zeros((len(X), 2)))
    np.testing.assert_array_equal(wave_residual(ISO, lin, 0.7, x), [0.0, 0.0])
    quad = SpacetimeField(lambda t, X: np.stack([t * t + 0 * X[:, 0], 0 * X[:, 0]], axis=1), 2,
                          lambda t, X: np.zeros((len(X), 2, 2)),
                          lambda t, X: np.zeros((len(X), 2, 2, 2)))
    np.testing.assert_allclose(wave_residual(ISO, quad, 0.4, x), [2.0, 0.0], atol=1e-6)


@pytest.mark.parametrize("branch", [0, 1])
def test_plane_wave_annihilated(branch):
    """d sin(p.x - w t) with w^2 and d an eigenpair of the Christoffel matrix."""
    c = fam.constant_stiffness(voigt_unpack([[6.0, 2.0, 0.3], [2.0, 4.0, 0.1], [0.3, 0.1, 1.5]]))
    triple = MaterialTriple(constant_field(1.3, 2), c, GE)
    p = np.array([0.8, -0.5])
    vals, vecs = np.linalg.eig(christoffel_matrix(triple, [0.0, 0.0], p).entries)
    order = np.argsort(vals.real)
    w, d = np.sqrt(vals.real[order[branch]]), vecs.real[:, order[branch]]

    def fn(t, X):
        return np.sin(X @ p - w * t)[:, None] * d

    def grad(t, X):
        return np.einsum("N,a,m->Nam", np.cos(X @ p - w * t), p, d)

    def hess(t, X):
        return np.einsum("N,a,b,m->Nabm", -np.sin(X @ p - w * t), p, p, d)

    def dtt(t, X):
        return -w * w * fn(t, X)

    u = SpacetimeField(fn, 2, grad, hess, dtt)
    np.testing.assert_allclose(wave_residual(triple, u, 0.37, pts()), 0.0, atol=1e-13)


# -- Christoffel matrix, symbol, qP norms ----------------------------------------------

def test_christoffel_isotropic_example():
    G = christoffel_matrix(ISO, [0.5, 0.5], [1.0, 0.0])
    np.testing.assert_array_equal(G.entries, np.diag([4.0, 1.0]))
    np.testing.assert_allclose(G.eigenvalues(), [1.0, 4.0])
    np.testing.assert_array_equal(christoffel_matrix(ISO, [0.5, 0.5], [2.0, 0.0]).entries, 4 * G.entries)
    with pytest.raises(DegenerateSlownessError):
        christoffel_matrix(ISO, [0.5, 0.5], [0.0, 0.0])


@given(st.floats(0, 2 * np.pi), st.floats(0.05, 4.0), st.integers(0, 100))
def test_christoffel_lowered_spd(theta, r, seed):
    triple = ex.material_families()["rotated_ortho/warped"]
    x = probe_points(BOX, 1, seed=seed)[0]
    p = r * np.array([np.cos(theta), np.sin(theta)])
    G = christoffel_matrix(triple, x, p)
    low = G.lowered()
    np.testing.assert_allclose(low, low.T, rtol=1e-12, atol=1e-14 * np.abs(low).max())
    g = triple.g(x)
    delta = check_positivity(triple.c(x), g)
    pnorm2 = p @ np.linalg.inv(g) @ p
    # |sym(w p)|^2 >= |w|^2 |p|^2 / 2, hence the factor one half
    assert np.linalg.eigvals(G.entries).real.min() >= 0.5 * delta * pnorm2 / float(triple.rho(x)) * (1 - 1e-10)


@given(st.floats(-5, 5).filter(lambda t: abs(t) > 1e-3), st.floats(0, 2 * np.pi))
def test_christoffel_homogeneity(t, theta):
    p = np.array([np.cos(theta), np.sin(theta)])
    x = np.array([0.4, 0.2])
    a = christoffel_matrix(RIEM, x, t * p).entries
    np.testing.assert_allclose(a, t * t * christoffel_matrix(RIEM, x, p).entries, rtol=1e-13)
    assert qp_conorm(RIEM, x, t * p) == pytest.approx(abs(t) * qp_conorm(RIEM, x, p), rel=1e-13)


def test_principal_symbol_examples():
    x = [0.5, 0.5]
    np.testing.assert_array_equal(principal_symbol(ISO, 1.0, [1.0, 0.0], x), np.diag([3.0, 0.0]))
    np.testing.assert_array_equal(principal_symbol(ISO, 0.0, [1.0, 0.0], x), np.zeros((2, 2)))
    # fixed wave covector xi, omega^2 the top eigenvalue of Gamma(xi), slowness xi / omega
    xi = np.array([0.6, -0.8])
    w = qp_conorm(RIEM, [0.3, 0.2], xi)
    s = principal_symbol(RIEM, w, xi / w, [0.3, 0.2])
    assert abs(np.linalg.det(s)) <= 1e-12 * np.abs(s).max() ** 2


def test_qp_speed_examples():
    assert qp_conorm(ISO, [0.5, 0.5], [1.0, 0.0]) == pytest.approx(2.0, rel=1e-15)
    assert qp_norm(ISO, [0.5, 0.5], [1.0, 0.0]) == pytest.approx(0.5, abs=1e-8)
    with pytest.raises(DegenerateSlownessError):
        qp_conorm(ISO, [0.5, 0.5], [0.0, 0.0])
    with pytest.raises(DegenerateSlownessError):
        qp_norm(ISO, [0.5, 0.5], [0.0, 0.0])


def test_qp_norm_matches_brute_force():
    """Dual norm by 10^4 samples of the slowness circle."""
    x = np.array([0.3, 0.7])
    triple = ex.material_families()["rotated_ortho/warped"]
    v = np.array([0.4, -1.1])
    th = np.linspace(0, 2 * np.pi, 10_000, endpoint=False)
    brute = max((np.cos(a) * v[0] + np.sin(a) * v[1]) / qp_conorm(triple, x, [np.cos(a), np.sin(a)])
                for a in th)
    got = qp_norm(triple, x, v)
    assert got >= brute - 1e-12
    assert got == pytest.approx(brute, rel=1e-6)


def test_qp_norm_three_dimensions():
    triple = MaterialTriple(constant_field(1.0, 3), fam.constant_stiffness(isotropic_stiffness(2.0, 1.0, 3)),
                            euclidean_metric(3))
    assert qp_norm(triple, np.zeros(3), [0.0, 3.0, 4.0]) == pytest.approx(2.5, rel=1e-7)


# -- scaling identity -----------------------------------------------------------------

def test_scaling_constant_factors_exact():
    mu, lam = constant_field(3.0, 2), constant_field(0.5, 2)
    X = pts()
    lhs, base, q = scaling_identity_parts(RIEM, mu, lam, U, X)
    assert np.abs(q).max() == 0.0
    np.testing.assert_allclose(lhs, base, rtol=1e-14, atol=1e-13)
    assert scaling_identity_residual(RIEM, mu, lam, U, X).max_relative <= 1e-13


def test_scaling_constrained_lambda():
    mu = fam.exp_linear_scalar([0.5, 0.2], 2)
    lam = ex.constrained_lambda(mu, 2)
    X = pts(32)
    assert np.abs(scaling_q_term(RIEM, mu, lam, U, X)).max() <= 1e-12
    assert scaling_identity_residual(RIEM, mu, lam, U, X).max_relative <= 1e-10


def test_scaling_monomial_example_against_oracle():
    """lambda = 1, mu = exp(x1), isotropic c, u = (x1^2, x2^2)."""
    x1, x2 = oracles.x1, oracles.x2
    c = oracles.iso_c(2, 1)
    u_expr = [x1 ** 2, x2 ** 2]
    mu_expr = sp.exp(x1)
    muc = [[[[mu_expr * c[i][j][k][l] for l in range(2)] for k in range(2)] for j in range(2)]
           for i in range(2)]
    want = [e / mu_expr for e in oracles.div_form(muc, sp.eye(2), u_expr)]
    X = pts(16)
    triple = ISO
    mu = fam.exp_linear_scalar([1.0, 0.0], 2)
    u = poly((0, 1.0, [2, 0]), (1, 1.0, [0, 2]))
    lhs, base, q = scaling_identity_parts(triple, mu, ONE, u, X)
    np.testing.assert_allclose(lhs, oracles.evaluate(want, X), rtol=1e-13)
    assert scaling_identity_residual(triple, mu, ONE, u, X).max_relative <= 1e-10
    # here Q u = c^{i1kl} d_k u^l = (4 * 2 x1 + 2 * 2 x2, 0)
    np.testing.assert_allclose(q, np.stack([8 * X[:, 0] + 4 * X[:, 1], 0 * X[:, 0]], axis=1), rtol=1e-14)


def test_scaling_sides_against_oracle():
    x1, x2 = oracles.x1, oracles.x2
    mu_expr = sp.exp(sp.Rational(1, 2) * x1 + sp.Rational(1, 5) * x2)
    lam_expr = sp.exp(sp.Rational(3, 10) * x1 - sp.Rational(2, 5) * x2)
    lhs_e, base_e, q_e = oracles.scaling_sides(mu_expr, lam_expr)
    X = pts(8, seed=6)
    mu = fam.exp_linear_scalar([0.5, 0.2], 2)
    lam = fam.exp_linear_scalar([0.3, -0.4], 2)
    lhs, base, q = scaling_identity_parts(RIEM, mu, lam, U, X)
    for got, ref in ((lhs, lhs_e), (base, base_e), (q, q_e)):
        np.testing.assert_allclose(got, oracles.evaluate(ref, X), rtol=1e-12, atol=1e-12)
    # unconstrained pair: the gap between the two sides is exactly Q u
    np.testing.assert_allclose(lhs - base, q, rtol=1e-10, atol=1e-12)
    assert np.abs(q).max() > 1e-3


def test_scaling_rejects_bad_factors():
    X = pts(4)
    with pytest.raises(GaugeError):
        scaling_identity_residual(RIEM, constant_field(0.0, 2), ONE, U, X)
    with pytest.raises(GaugeError):
        scaling_identity_residual(RIEM, ONE, constant_field(-1.0, 2), U, X)


# -- invariance residuals -------------------------------------------------------------

def test_coord_invariance_identity_exact():
    r = coord_invariance_residual(RIEM, identity_map(2, BOX), U, pts())
    assert np.abs(r.value).max() == 0.0
    assert np.all(r.scale > 0)


@pytest.mark.parametrize("phi", [linear_conformal(2.0, None, None, 2),
                                 affine_map([[1.2, 0.3], [0.1, 0.9]], [0.05, 0.1])],
                         ids=["doubling", "shear"])
def test_coord_invariance_affine(phi):
    for form in ("div", "cov"):
        assert coord_invariance_residual(RIEM, phi, U, pts(), form).max_relative <= 1e-8


def test_coord_invariance_bump_converges():
    """FD Jacobians of a bump displacement: residual falls like h^2."""
    phi = bump_displacement(0.05, [1.0, 0.5], BOX, 0.1)
    triple = MaterialTriple(ONE, fam.isotropic_gradient(2.0, 1.0, 2, [0.3, 0.1], [0.1, -0.2]), GE)
    X = pts(16, seed=2)
    errs = [coord_invariance_residual(triple, phi.with_fd_jacobian(h), U, X).max_relative
            for h in (4e-3, 2e-3)]
    assert errs[1] < errs[0]
    assert np.log2(errs[0] / errs[1]) >= 1.8


def test_conformal_invariance_examples():
    rho = fam.linear_scalar(1.0, [0.2, 0.1], 2)
    c = fam.isotropic_gradient(2.0, 1.0, 2, [0.3, 0.1], [0.1, -0.2])
    X = pts()
    assert np.abs(conformal_invariance_residual(rho, c, identity_map(2, BOX), U, X).value).max() == 0.0
    assert conformal_invariance_residual(rho, c, linear_conformal(2.0, None, None, 2), U, X).max_relative <= 1e-8
    assert conformal_invariance_residual(rho, c, linear_conformal(1.0, 0.7, None, 2), U, X).max_relative <= 1e-10
    shear = affine_map([[1.0, 1.0], [0.0, 1.0]], domain=BOX)
    with pytest.raises(ConformalityError):
        conformal_invariance_residual(rho, c, shear, U, X)


def test_principal_check_examples():
    c = fam.rotated_stiffness([[6, 2, 0], [2, 4, 0], [0, 0, 1.5]], 0.2, [0.5, -0.3], 2)
    x = np.array([0.4, 0.3])
    p = np.array([0.6, 0.8])
    assert np.abs(principal_conformal_check(ONE, c, identity_map(2, BOX), 1.1, p, x).value).max() == 0.0
    two = principal_conformal_check(constant_field(2.0, 2), c, identity_map(2, BOX), 1.1, p, x)
    assert np.abs(two.value[:4]).max() == 0.0
    rho = fam.linear_scalar(1.0, [0.2, 0.1], 2)
    assert principal_conformal_check(rho, c, linear_conformal(2.0, None, None, 2), 1.1, p, x,
                                     points=pts()).max_relative <= 1e-10
    shear = affine_map([[1.0, 1.0], [0.0, 1.0]], domain=BOX)
    with pytest.raises(ConformalityError):
        principal_conformal_check(rho, c, shear, 1.1, p, x, points=pts())


@pytest.mark.parametrize("name", ex.QUADRANT_PRESETS)
def test_gauge_quadrants(name):
    res = ex.run_quadrant(name, points=32)
    assert res.passed, res.summary
