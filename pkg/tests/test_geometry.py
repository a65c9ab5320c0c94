import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from elastogauge import families as fam
from elastogauge.errors import ConformalityError, GaugeError, JacobianError
from elastogauge.fields import constant_field
from elastogauge.geometry import (GaugeFactor, affine_map, black_pushforward, builtin_diffeo,
                                  bump_displacement, collar_mask, exp_conformal,
                                  holomorphic_sample, identity_map, is_conformal,
                                  linear_conformal, pushforward_covector, pushforward_metric,
                                  pushforward_scalar, pushforward_stiffness, pushforward_vector,
                                  square_pushforward)
from elastogauge.tensor_core import (check_symmetry, euclidean_metric, isotropic_stiffness,
                                     positivity_margin, probe_points)

BOX = np.array([[0.0, 1.0], [0.0, 1.0]])
ISO = fam.constant_stiffness(isotropic_stiffness(2.0, 1.0, 2))
ORTHO = fam.rotated_stiffness([[6, 2, 0], [2, 4, 0], [0, 0, 1.5]], 0.2, [0.5, -0.3], 2)
DOUBLE = linear_conformal(2.0, None, None, 2)


def pts(count=16, seed=0, bounds=BOX):
    return probe_points(bounds, count, seed=seed)


def test_pushforward_identity_unchanged():
    phi = identity_map(2, BOX)
    X = pts()
    g = fam.conformal_exp_metric([0.3, -0.2], 2)
    np.testing.assert_array_equal(pushforward_metric(g, phi).values(X), g.values(X))
    np.testing.assert_array_equal(pushforward_stiffness(ORTHO, phi).values(X), ORTHO.values(X))


def test_doubling_examples():
    Y = pts(8, bounds=[[0, 2], [0, 2]])
    np.testing.assert_allclose(pushforward_metric(euclidean_metric(2), DOUBLE).values(Y),
                               np.broadcast_to(np.eye(2) / 4, (8, 2, 2)), rtol=1e-15)
    np.testing.assert_allclose(pushforward_stiffness(ISO, DOUBLE).values(Y), 16 * ISO.values(Y), rtol=1e-15)
    rho = fam.linear_scalar(0.0, [1.0, 0.0], 2)
    np.testing.assert_allclose(pushforward_scalar(rho, DOUBLE).values(Y), Y[:, 0] / 2, rtol=1e-15)
    # det(D phi)^(-2/n) = 1/4 matches the pushed metric factor
    assert np.linalg.det(DOUBLE.jacobian(Y[0])) ** (-2 / 2) == pytest.approx(0.25)


def test_doubling_vectors():
    y = np.array([[0.4, 0.6]])
    u = constant_field([1.0, 0.0], 2)
    nu = constant_field([1.0, 0.0], 2)
    pu = pushforward_vector(u, DOUBLE).values(y)[0]
    pn = pushforward_covector(nu, DOUBLE).values(y)[0]
    np.testing.assert_allclose(pu, [2.0, 0.0])
    np.testing.assert_allclose(pn, [0.5, 0.0])
    assert pu @ pn == pytest.approx(1.0)
    rot = linear_conformal(1.0, np.pi / 2, None, 2)
    np.testing.assert_allclose(pushforward_vector(u, rot).values(y)[0], [0.0, 1.0], atol=1e-15)


def test_constant_density_invariant():
    rho = constant_field(3.0, 2)
    phi = bump_displacement(0.05, [1, 1], BOX, 0.1)
    np.testing.assert_array_equal(pushforward_scalar(rho, phi).values(pts()), 3.0)


@given(st.floats(0, 2 * np.pi))
def test_rotation_keeps_isotropic(angle):
    R = linear_conformal(1.0, angle, None, 2)
    np.testing.assert_allclose(pushforward_stiffness(ISO, R).values(pts(4)), ISO.values(pts(4)), atol=1e-13)


def test_square_and_black_doubling():
    Y = pts(8, bounds=[[0, 2], [0, 2]])
    rho = constant_field(1.5, 2)
    rho_sq, c_sq = square_pushforward(rho, ISO, DOUBLE, points=Y)
    np.testing.assert_allclose(c_sq.values(Y), ISO.values(Y), rtol=1e-15)
    np.testing.assert_allclose(rho_sq.values(Y), 1.5 / 4, rtol=1e-15)
    np.testing.assert_allclose(black_pushforward(ISO, DOUBLE, points=Y).values(Y), 4 * ISO.values(Y), rtol=1e-15)


def test_black_is_ratio_of_squares():
    phi = holomorphic_sample()
    Y = phi(pts(8, bounds=phi.domain))
    one_sq, c_sq = square_pushforward(constant_field(1.0, 2), ORTHO, phi)
    ratio = c_sq.values(Y) / one_sq.values(Y)[:, None, None, None, None]
    np.testing.assert_allclose(black_pushforward(ORTHO, phi).values(Y), ratio, rtol=1e-13)


def test_black_rotation_equals_plain():
    R = linear_conformal(1.0, 0.7, None, 2)
    Y = pts(4)
    np.testing.assert_allclose(black_pushforward(ORTHO, R, points=Y).values(Y),
                               pushforward_stiffness(ORTHO, R).values(Y), rtol=1e-14)


def test_conformality():
    assert is_conformal(linear_conformal(1.7, 0.4, [0.1, 0.2], 2), points=pts())
    assert is_conformal(holomorphic_sample())
    assert is_conformal(exp_conformal())
    shear = affine_map([[1.0, 1.0], [0.0, 1.0]], domain=BOX)
    assert not is_conformal(shear)
    with pytest.raises(ConformalityError):
        square_pushforward(constant_field(1.0, 2), ISO, shear, points=pts())
    with pytest.raises(ConformalityError):
        black_pushforward(ISO, shear, points=pts())


def test_builtin_examples():
    X = pts()
    assert np.array_equal(bump_displacement(0.0, [1, 0], BOX, 0.1)(X), X)
    np.testing.assert_array_equal(linear_conformal(2.0, None, None, 2).jacobian(X), np.broadcast_to(2 * np.eye(2), (16, 2, 2)))
    phi = builtin_diffeo("bump_displacement", BOX, amplitude=0.05, direction=[1, 1], collar_width=0.1)
    edge = np.array([[0.05, 0.5], [0.5, 0.98], [0.0, 0.0]])
    np.testing.assert_array_equal(phi(edge), edge)
    np.testing.assert_array_equal(phi.jacobian(edge), np.broadcast_to(np.eye(2), (3, 2, 2)))
    with pytest.raises(JacobianError):
        bump_displacement(0.5, [1, 1], BOX, 0.1)
    with pytest.raises(ValueError):
        builtin_diffeo("nope", BOX)


def test_bump_map_invariants():
    phi = bump_displacement(0.05, [1, 1], BOX, 4 / 63)
    X = probe_points(BOX, 256, seed=4, margin=0.0)
    assert phi.check(X)
    lo, hi = phi.det_range(X)
    assert lo >= 0.5 and hi > 1.0


def test_functoriality_and_inverse():
    phi = bump_displacement(0.05, [1, 0.3], BOX, 0.1)
    eta = linear_conformal(1.3, 0.2, [0.05, -0.1], 2)
    comp = phi.compose(eta)
    g = fam.warped_metric(0.8, 2)
    Y = comp(pts(12))
    direct = pushforward_metric(g, comp).values(Y)
    nested = pushforward_metric(pushforward_metric(g, eta), phi).values(Y)
    np.testing.assert_allclose(direct, nested, rtol=1e-12)
    cd = pushforward_stiffness(ORTHO, comp).values(Y)
    cn = pushforward_stiffness(pushforward_stiffness(ORTHO, eta), phi).values(Y)
    np.testing.assert_allclose(cd, cn, rtol=1e-12, atol=1e-12)
    X = pts(12)
    back = pushforward_stiffness(pushforward_stiffness(ORTHO, phi), phi.inverse_map()).values(X)
    np.testing.assert_allclose(back, ORTHO.values(X), rtol=1e-10, atol=1e-10)


def test_pushforward_keeps_symmetry_and_positivity():
    phi = bump_displacement(0.05, [1, 1], BOX, 0.1)
    g = fam.conformal_exp_metric([0.3, -0.2], 2)
    Y = phi(pts(32))
    c_push = pushforward_stiffness(ORTHO, phi).values(Y)
    assert check_symmetry(c_push, 1e-12)
    assert np.all(positivity_margin(c_push, pushforward_metric(g, phi).values(Y)) > 0)


@pytest.mark.parametrize("phi", [linear_conformal(2.0, 0.3, None, 2), holomorphic_sample(), exp_conformal()],
                         ids=["linear", "holomorphic", "exp"])
def test_conformal_pushforward_of_euclidean(phi):
    X = pts(16, bounds=phi.domain if phi.domain is not None else BOX)
    Y = phi(X)
    det = np.linalg.det(phi.jacobian(X))
    push = pushforward_metric(euclidean_metric(2), phi).values(Y)
    np.testing.assert_allclose(push, det[:, None, None] ** (-1.0) * np.eye(2), rtol=1e-12, atol=1e-15)


def test_collar_fields_unchanged():
    phi = bump_displacement(0.05, [1, 1], BOX, 0.1)
    X = probe_points(BOX, 512, seed=9, margin=0.0)
    inside = collar_mask(X, BOX, 0.1)
    Xc = X[inside]
    for f, push in ((fam.warped_metric(0.8, 2), pushforward_metric), (ORTHO, pushforward_stiffness)):
        np.testing.assert_array_equal(push(f, phi).values(Xc), f.values(Xc))


def test_gauge_factor_validation():
    ok = GaugeFactor(fam.bump_scalar(0.5, [0.5, 0.5], 0.4, 2), True)
    assert ok.validate(BOX)
    with pytest.raises(GaugeError):
        GaugeFactor(constant_field(2.0, 2), True).validate(BOX)
    with pytest.raises(GaugeError):
        GaugeFactor(fam.bump_scalar(-2.0, [0.5, 0.5], 0.4, 2), False).validate(BOX)


def test_fd_jacobian_close_to_analytic():
    phi = bump_displacement(0.05, [1, 1], BOX, 0.1)
    X = pts()
    errs = [np.abs(phi.with_fd_jacobian(h).jacobian(X) - phi.jacobian(X)).max() for h in (2e-3, 1e-3)]
    assert 3.0 <= errs[0] / errs[1] <= 5.0
