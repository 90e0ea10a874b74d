import math
import random

import numpy as np
import pytest

from pbrbd.bodies import (
    InvalidShapeError,
    Material,
    RigidBody,
    apply_angular_correction,
    apply_positional_correction,
    generalized_inverse_mass_angular,
    generalized_inverse_mass_positional,
    inertia_tensor,
    make_rigid_body,
    make_static_body,
)
from pbrbd.collision import Box, Capsule, HalfSpace, Sphere
from pbrbd.vecmath import (
    mat_diag,
    qfrom_axis_angle,
    qmul,
    qnorm,
    rotate,
    vcross,
    vnorm,
    vscale,
    vsub,
)


def unit_cube_body(**kwargs):
    return make_rigid_body(Box((0.5, 0.5, 0.5)), 1.0, (0.0, 0.0, 0.0), **kwargs)


def test_inertia_unit_cube():
    m = inertia_tensor(Box((0.5, 0.5, 0.5)), 1.0)
    for i in range(3):
        assert math.isclose(m[i][i], 1.0 / 6.0, rel_tol=1e-12)


def test_inertia_solid_sphere():
    m = inertia_tensor(Sphere(1.0), 1.0)
    for i in range(3):
        assert math.isclose(m[i][i], 0.4, rel_tol=1e-12)


def test_inertia_box_1x2x3():
    m = inertia_tensor(Box((0.5, 1.0, 1.5)), 12.0)
    assert math.isclose(m[0][0], 13.0, rel_tol=1e-12)
    assert math.isclose(m[1][1], 10.0, rel_tol=1e-12)
    assert math.isclose(m[2][2], 5.0, rel_tol=1e-12)


def test_inertia_scaling():
    base = inertia_tensor(Box((0.3, 0.4, 0.5)), 2.0)
    assert inertia_tensor(Box((0.3, 0.4, 0.5)), 6.0)[1][1] == pytest.approx(3 * base[1][1])
    scaled = inertia_tensor(Box((0.6, 0.8, 1.0)), 2.0)
    assert scaled[2][2] == pytest.approx(4 * base[2][2], rel=1e-12)


def test_inertia_invalid_inputs():
    with pytest.raises(InvalidShapeError):
        inertia_tensor(Sphere(1.0), 0.0)
    with pytest.raises(InvalidShapeError):
        inertia_tensor(HalfSpace((0.0, 1.0, 0.0)), 1.0)
    with pytest.raises(ValueError):
        Box((1.0, -1.0, 1.0))


def test_capsule_inertia_against_monte_carlo():
    """Closed-form capsule tensor versus a rejection-sampled mass integral."""
    hl, r, mass = 0.5, 0.2, 3.0
    analytic = inertia_tensor(Capsule(hl, r), mass)

    rng = np.random.default_rng(42)
    n = 2_000_000
    pts = rng.uniform(-1.0, 1.0, size=(n, 3)) * np.array([r, hl + r, r])
    clamped_y = np.clip(pts[:, 1], -hl, hl)
    inside = (pts[:, 0] ** 2 + pts[:, 2] ** 2 + (pts[:, 1] - clamped_y) ** 2) <= r * r
    pts = pts[inside]
    m_point = mass / len(pts)
    ixx = m_point * np.sum(pts[:, 1] ** 2 + pts[:, 2] ** 2)
    iyy = m_point * np.sum(pts[:, 0] ** 2 + pts[:, 2] ** 2)
    izz = m_point * np.sum(pts[:, 0] ** 2 + pts[:, 1] ** 2)

    assert analytic[0][0] == pytest.approx(ixx, rel=0.01)
    assert analytic[1][1] == pytest.approx(iyy, rel=0.01)
    assert analytic[2][2] == pytest.approx(izz, rel=0.01)


def test_generalized_inverse_mass_positional_static_and_center():
    static = make_static_body(Box((0.5, 0.5, 0.5)))
    assert generalized_inverse_mass_positional(static, (0.5, 0.0, 0.0), (0.0, 1.0, 0.0)) == 0.0
    body = unit_cube_body()
    assert generalized_inverse_mass_positional(body, (0.0, 0.0, 0.0), (0.0, 1.0, 0.0)) == body.inverse_mass


def test_generalized_inverse_mass_positional_hand_value():
    body = unit_cube_body()  # I = diag(1/6)
    w = generalized_inverse_mass_positional(body, (0.5, 0.0, 0.0), (0.0, 1.0, 0.0))
    assert math.isclose(w, 2.5, rel_tol=1e-12)  # 1 + 0.25 * 6


def test_generalized_inverse_mass_angular_values():
    static = make_static_body(Box((0.5, 0.5, 0.5)))
    assert generalized_inverse_mass_angular(static, (0.0, 0.0, 1.0)) == 0.0
    body = RigidBody(position=(0.0, 0.0, 0.0), inverse_mass=1.0,
                     inertia_body=mat_diag(1.0, 2.0, 4.0))
    assert math.isclose(generalized_inverse_mass_angular(body, (0.0, 0.0, 1.0)), 0.25,
                        rel_tol=1e-12)


def test_generalized_inverse_mass_angular_frame_independence():
    rng = random.Random(2)
    body = RigidBody(position=(0.0, 0.0, 0.0), inverse_mass=1.0,
                     inertia_body=mat_diag(1.0, 2.0, 4.0))
    for _ in range(50):
        axis = (rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1))
        axis = vscale(axis, 1.0 / vnorm(axis))
        base = generalized_inverse_mass_angular(body, axis)
        q = qfrom_axis_angle((rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)),
                             rng.uniform(-math.pi, math.pi))
        rotated = RigidBody(position=(0.0, 0.0, 0.0), inverse_mass=1.0,
                            inertia_body=mat_diag(1.0, 2.0, 4.0),
                            orientation=qmul(q, body.orientation))
        assert abs(generalized_inverse_mass_angular(rotated, rotate(q, axis)) - base) < 1e-12


def test_corrections_leave_static_bodies_untouched():
    body = make_static_body(Box((0.5, 0.5, 0.5)), position=(1.0, 2.0, 3.0))
    pos, q = body.position, body.orientation
    apply_positional_correction(body, (0.5, 0.0, 0.0), (0.0, 5.0, 0.0))
    apply_angular_correction(body, (0.0, 0.0, 1.0), 2.0)
    assert body.position == pos and body.orientation == q


def test_positional_correction_zero_offset_is_pure_translation():
    body = unit_cube_body()
    apply_positional_correction(body, (0.0, 0.0, 0.0), (0.0, 0.1, 0.0))
    assert body.position == (0.0, 0.1, 0.0)
    assert body.orientation == (1.0, 0.0, 0.0, 0.0)


def test_positional_correction_sign():
    # Correction +y applied at +x offset twists the body positively about +z.
    body = unit_cube_body()
    apply_positional_correction(body, (0.5, 0.0, 0.0), (0.0, 0.1, 0.0))
    assert body.position[1] > 0.0
    assert body.orientation[3] > 0.0  # positive z component
    assert abs(qnorm(body.orientation) - 1.0) < 1e-12


def test_angular_correction_zero_magnitude_and_axis_preservation():
    body = unit_cube_body()
    q0 = body.orientation
    apply_angular_correction(body, (0.0, 0.0, 1.0), 0.0)
    assert body.orientation == q0
    # Sphere-symmetric inertia keeps the rotation axis parallel to the input.
    axis = vscale((1.0, 2.0, 2.0), 1.0 / 3.0)
    apply_angular_correction(body, axis, 0.05)
    q = body.orientation
    vec = (q[1], q[2], q[3])
    cross = vcross(vscale(vec, 1.0 / vnorm(vec)), axis)
    assert vnorm(cross) < 1e-9
    assert abs(qnorm(q) - 1.0) < 1e-12


def test_positional_correction_consistent_with_velocity_impulse():
    """Applying a positional correction at an offset and recomputing the
    velocities must equal applying the equivalent impulse directly."""
    from pbrbd.contacts import _apply_velocity_impulse
    from pbrbd.engine import Scene, SolverConfig, velocity_update

    h = 1e-4
    r_local = (0.4, -0.2, 0.3)
    p = (2e-5, -1e-5, 3e-5)  # small so the finite rotation stays linear

    moved = unit_cube_body()
    scene = Scene(config=SolverConfig(gravity=(0.0, 0.0, 0.0)))
    scene.add_body(moved)
    moved.prev_position = moved.position
    moved.prev_orientation = moved.orientation
    apply_positional_correction(moved, r_local, p)
    velocity_update(scene, h)

    reference = unit_cube_body()
    _apply_velocity_impulse(reference, r_local, vscale(p, 1.0 / h), 1.0)

    assert vnorm(vsub(moved.velocity, reference.velocity)) < 1e-9
    assert vnorm(vsub(moved.angular_velocity_local, reference.angular_velocity_local)) < 1e-6


def test_material_validation():
    with pytest.raises(ValueError):
        Material(restitution=1.5)
    with pytest.raises(ValueError):
        Material(static_friction=-0.1)
