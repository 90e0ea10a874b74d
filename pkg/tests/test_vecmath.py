import math
import random

import pytest

from pbrbd.vecmath import (
    DegenerateMatrixError,
    IDENTITY_M,
    integrate_orientation,
    invert_spd,
    mat_diag,
    mat_mul,
    mat_vec,
    qfrom_axis_angle,
    qmul,
    qnorm,
    qto_matrix,
    rotate,
    rotate_inv,
    vnorm,
    vsub,
)


def rand_unit_quat(rng):
    axis = (rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1))
    return qfrom_axis_angle(axis, rng.uniform(-math.pi, math.pi))


def test_rotate_identity():
    assert rotate((1.0, 0.0, 0.0, 0.0), (3.0, 4.0, 5.0)) == (3.0, 4.0, 5.0)


def test_rotate_quarter_turn_about_z():
    q = qfrom_axis_angle((0.0, 0.0, 1.0), math.pi / 2)
    v = rotate(q, (1.0, 0.0, 0.0))
    assert math.isclose(v[0], 0.0, abs_tol=1e-15)
    assert math.isclose(v[1], 1.0, rel_tol=1e-12)
    assert math.isclose(v[2], 0.0, abs_tol=1e-15)


def test_rotate_matches_matrix_form_and_preserves_length():
    rng = random.Random(7)
    for _ in range(200):
        q = rand_unit_quat(rng)
        v = (rng.uniform(-5, 5), rng.uniform(-5, 5), rng.uniform(-5, 5))
        rq = rotate(q, v)
        rm = mat_vec(qto_matrix(q), v)
        assert vnorm(vsub(rq, rm)) < 1e-12
        assert abs(vnorm(rq) - vnorm(v)) < 1e-12


def test_rotate_inverse_roundtrip():
    rng = random.Random(3)
    for _ in range(100):
        q = rand_unit_quat(rng)
        v = (rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-2, 2))
        assert vnorm(vsub(rotate(q, rotate_inv(q, v)), v)) < 1e-12


def test_composition_matches_sequential_rotation():
    rng = random.Random(11)
    for _ in range(100):
        q1, q2 = rand_unit_quat(rng), rand_unit_quat(rng)
        v = (rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1))
        assert vnorm(vsub(rotate(qmul(q1, q2), v), rotate(q1, rotate(q2, v)))) < 1e-12


def test_integrate_orientation_zero_rate_is_identity_map():
    q = qfrom_axis_angle((1.0, 2.0, 3.0), 0.7)
    assert integrate_orientation(q, (0.0, 0.0, 0.0), 0.25) == q


def test_integrate_orientation_converges_to_axis_angle_exponential():
    # 100 sub-applications of h=0.01 at w=(0,0,pi) versus the exact rotation.
    q = (1.0, 0.0, 0.0, 0.0)
    w = (0.0, 0.0, math.pi)
    for _ in range(100):
        q = integrate_orientation(q, w, 0.01)
    exact = qfrom_axis_angle((0.0, 0.0, 1.0), math.pi)
    err = math.sqrt(sum((a - b) ** 2 for a, b in zip(q, exact)))
    assert err < 0.05


def test_integrate_orientation_output_unit_norm():
    rng = random.Random(5)
    for _ in range(100):
        q = rand_unit_quat(rng)
        w = (rng.uniform(-30, 30), rng.uniform(-30, 30), rng.uniform(-30, 30))
        out = integrate_orientation(q, w, rng.uniform(1e-4, 0.1))
        assert abs(qnorm(out) - 1.0) < 1e-12


def test_invert_spd_identity_and_diagonal():
    assert invert_spd(IDENTITY_M) == IDENTITY_M
    assert invert_spd(mat_diag(2.0, 4.0, 8.0)) == mat_diag(0.5, 0.25, 0.125)


def test_invert_spd_random_product_is_identity():
    rng = random.Random(13)
    for _ in range(50):
        # Random SPD matrix: A A^T + small ridge.
        a = [[rng.uniform(-1, 1) for _ in range(3)] for _ in range(3)]
        m = tuple(
            tuple(sum(a[i][k] * a[j][k] for k in range(3)) + (0.1 if i == j else 0.0)
                  for j in range(3))
            for i in range(3)
        )
        product = mat_mul(m, invert_spd(m))
        for i in range(3):
            for j in range(3):
                assert abs(product[i][j] - (1.0 if i == j else 0.0)) < 1e-9


def test_invert_spd_signals_degenerate():
    with pytest.raises(DegenerateMatrixError):
        invert_spd(((0.0,) * 3,) * 3)
