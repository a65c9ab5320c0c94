import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from elastogauge import families as fam
from elastogauge.errors import MetricError, PositivityError, SymmetryError
from elastogauge.fields import constant_field
from elastogauge.tensor_core import (MaterialTriple, check_positivity, check_symmetry,
                                     euclidean_metric, isotropic_stiffness, metric_det,
                                     positivity_margin, probe_points, symmetrize, voigt_pack,
                                     voigt_unpack, wave_speeds)


def random_symmetric_stiffness(rng, n):
    return symmetrize(rng.standard_normal((n,) * 4))


def test_isotropic_entries():
    c = isotropic_stiffness(2.0, 1.0, 2)
    # one-based (1,1,1,1), (1,1,2,2), (1,2,1,2), (1,1,1,2)
    assert c[0, 0, 0, 0] == 4.0
    assert c[0, 0, 1, 1] == 2.0
    assert c[0, 1, 0, 1] == 1.0
    assert c[0, 0, 0, 1] == 0.0
    assert check_symmetry(c)


def test_isotropic_rejects_degenerate():
    with pytest.raises(PositivityError):
        isotropic_stiffness(0.0, 0.0, 2)
    with pytest.raises(PositivityError):
        isotropic_stiffness(-3.0, 1.0, 2)


def test_wave_speeds():
    cp, cs = wave_speeds(2.0, 1.0, 1.0)
    assert cp == 2.0 and cs == 1.0


def test_dimension_one_rejected():
    with pytest.raises(Exception):
        isotropic_stiffness(1.0, 1.0, 1)


def test_minor_symmetry_break_detected():
    c = np.zeros((2,) * 4)
    c[0, 1, 0, 0] = 1.0
    assert not check_symmetry(c)


@given(st.integers(0, 10_000), st.sampled_from([2, 3]))
def test_symmetrized_passes(seed, n):
    c = random_symmetric_stiffness(np.random.default_rng(seed), n)
    assert check_symmetry(c)


@given(st.integers(0, 10_000))
def test_symmetry_check_relabeling_invariant(seed):
    rng = np.random.default_rng(seed)
    c = rng.standard_normal((2,) * 4)
    for perm in ((1, 0, 2, 3), (2, 3, 0, 1)):
        assert check_symmetry(c) == check_symmetry(np.transpose(c, perm))


def test_positivity_isotropic_examples():
    assert check_positivity(isotropic_stiffness(2.0, 1.0, 2), np.eye(2)) == pytest.approx(2.0, abs=1e-12)
    c = isotropic_stiffness(-3.0, 1.0, 2, check=False)
    assert check_positivity(c, np.eye(2)) == pytest.approx(-4.0, abs=1e-12)


def test_positivity_reference_form():
    n = 2
    g = np.array([[2.0, 0.3], [0.3, 1.0]])
    gi = np.linalg.inv(g)
    c = symmetrize(np.einsum("jk,il->ijkl", gi, gi))
    assert check_positivity(c, g) == pytest.approx(1.0, abs=1e-12)
    assert n == 2


@given(st.floats(-0.5, 5.0), st.floats(0.1, 5.0), st.sampled_from([2, 3]))
def test_positivity_isotropic_formula(lam, mu, n):
    delta = check_positivity(isotropic_stiffness(lam, mu, n, check=False), np.eye(n))
    assert delta == pytest.approx(min(2 * mu, n * lam + 2 * mu), abs=1e-10)


def test_singular_metric_rejected():
    with pytest.raises(MetricError):
        check_positivity(isotropic_stiffness(2.0, 1.0, 2), np.zeros((2, 2)))


def test_voigt_isotropic():
    M = voigt_pack(isotropic_stiffness(2.0, 1.0, 2))
    np.testing.assert_array_equal(M, [[4, 2, 0], [2, 4, 0], [0, 0, 1]])
    np.testing.assert_array_equal(voigt_pack(np.zeros((2,) * 4)), np.zeros((3, 3)))


@given(st.integers(0, 10_000), st.sampled_from([2, 3]))
def test_voigt_round_trip(seed, n):
    c = random_symmetric_stiffness(np.random.default_rng(seed), n)
    np.testing.assert_array_equal(voigt_unpack(voigt_pack(c)), c)


def test_voigt_asymmetric_rejected():
    c = np.zeros((2,) * 4)
    c[0, 1, 0, 0] = 1.0
    with pytest.raises(SymmetryError):
        voigt_pack(c)
    with pytest.raises(SymmetryError):
        voigt_unpack([[1, 2, 0], [0, 1, 0], [0, 0, 1]])


def test_metric_det_scales_exactly():
    g = np.array([[1.3, 0.2], [0.2, 0.7]])
    assert metric_det(4.0 * g) == 16.0 * metric_det(g)
    g3 = np.diag([1.0, 2.0, 3.0]) + 0.1
    assert metric_det(g3) == pytest.approx(np.linalg.det(g3), rel=1e-14)


def test_positivity_batched():
    c = np.stack([isotropic_stiffness(2.0, 1.0, 2), isotropic_stiffness(1.0, 0.5, 2)])
    g = np.stack([np.eye(2), np.eye(2)])
    np.testing.assert_allclose(positivity_margin(c, g), [2.0, 1.0], atol=1e-12)


def test_probe_points_deterministic(box):
    a = probe_points(box, 64, seed=3)
    b = probe_points(box, 64, seed=3)
    np.testing.assert_array_equal(a, b)
    assert a.min() > 0 and a.max() < 1


def test_material_triple_validation(box):
    good = MaterialTriple(constant_field(1.0, 2), fam.constant_stiffness(isotropic_stiffness(2.0, 1.0, 2)),
                          euclidean_metric(2))
    assert good.validate(probe_points(box)) == pytest.approx(2.0)
    bad_c = fam.constant_stiffness(isotropic_stiffness(-3.0, 1.0, 2, check=False))
    with pytest.raises(PositivityError):
        MaterialTriple(constant_field(1.0, 2), bad_c, euclidean_metric(2)).validate(probe_points(box))
    with pytest.raises(PositivityError):
        MaterialTriple(constant_field(-1.0, 2), good.c, good.g).validate(probe_points(box))
    with pytest.raises(ValueError):
        MaterialTriple(constant_field(1.0, 3), good.c, good.g)
