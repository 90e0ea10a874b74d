import math
import random

import pytest

from pbrbd.bodies import Particle, make_rigid_body, make_static_body
from pbrbd.collision import Box, Sphere
from pbrbd.constraints import (
    AnchorConstraint,
    BallJointConstraint,
    DistanceConstraint,
    HingeConstraint,
    SingularConstraintError,
    VolumeConstraint,
    constraint_force,
    solve_anchor,
    solve_ball_joint,
    solve_distance,
    solve_hinge,
    solve_volume,
    volume6,
    volume_gradients,
    xpbd_lambda,
)
from pbrbd.vecmath import qfrom_axis_angle, rotate, vcross, vdot, vnorm, vscale, vsub

H = 1.0 / 1200.0


def test_xpbd_lambda_zero_error():
    assert xpbd_lambda(0.0, [(1.0, (1.0, 0.0, 0.0))], 0.0, H) == 0.0


def test_xpbd_lambda_two_unit_masses_close_full_error():
    lam = xpbd_lambda(1.0, [(1.0, (1.0, 0.0, 0.0)), (1.0, (-1.0, 0.0, 0.0))], 0.0, H)
    assert math.isclose(lam, 0.5, rel_tol=1e-12)


def test_xpbd_lambda_huge_compliance_corrects_nothing():
    lam = xpbd_lambda(1.0, [(1.0, (1.0, 0.0, 0.0))], 1e12, H)
    assert abs(lam) < 1e-4


def test_xpbd_lambda_all_static_rigid_raises():
    with pytest.raises(SingularConstraintError):
        xpbd_lambda(1.0, [(0.0, (1.0, 0.0, 0.0))], 0.0, H)


def test_distance_at_rest_is_noop():
    a = Particle((0.0, 0.0, 0.0))
    b = Particle((1.0, 0.0, 0.0))
    c = DistanceConstraint(a=a, b=b, rest=1.0)
    solve_distance(c, H)
    assert a.position == (0.0, 0.0, 0.0)
    assert b.position == (1.0, 0.0, 0.0)


def test_distance_equal_masses_split_symmetrically():
    a = Particle((0.0, 0.0, 0.0))
    b = Particle((2.0, 0.0, 0.0))
    c = DistanceConstraint(a=a, b=b, rest=1.0)
    solve_distance(c, H)
    assert math.isclose(a.position[0], 0.5, rel_tol=1e-12)
    assert math.isclose(b.position[0], 1.5, rel_tol=1e-12)
    # midpoint unchanged by symmetry
    assert math.isclose(a.position[0] + b.position[0], 2.0, rel_tol=1e-12)


def test_distance_static_endpoint_takes_no_correction():
    anchor = Particle((0.0, 0.0, 0.0), inverse_mass=0.0)
    b = Particle((2.0, 0.0, 0.0))
    solve_distance(DistanceConstraint(a=anchor, b=b, rest=1.0), H)
    assert anchor.position == (0.0, 0.0, 0.0)
    assert math.isclose(b.position[0], 1.0, rel_tol=1e-12)


def test_distance_mass_splitting_two_to_one():
    # The particle with twice the mass takes half the correction.
    light = Particle((0.0, 0.0, 0.0), inverse_mass=1.0)
    heavy = Particle((2.0, 0.0, 0.0), inverse_mass=0.5)
    solve_distance(DistanceConstraint(a=light, b=heavy, rest=1.0), H)
    moved_light = abs(light.position[0])
    moved_heavy = abs(heavy.position[0] - 2.0)
    assert math.isclose(moved_light, 2.0 * moved_heavy, rel_tol=1e-12)


def test_distance_max_mode_ignores_slack():
    a = Particle((0.0, 0.0, 0.0))
    b = Particle((0.5, 0.0, 0.0))
    assert solve_distance(DistanceConstraint(a=a, b=b, rest=1.0, mode="max"), H) is None
    assert b.position == (0.5, 0.0, 0.0)


def test_distance_degenerate_skipped():
    a = Particle((0.0, 0.0, 0.0))
    b = Particle((0.0, 0.0, 0.0))
    assert solve_distance(DistanceConstraint(a=a, b=b, rest=1.0), H) is None


def test_distance_zero_compliance_idempotent():
    a = Particle((0.0, 0.0, 0.0))
    b = Particle((2.0, 0.0, 0.0))
    c = DistanceConstraint(a=a, b=b, rest=1.0)
    solve_distance(c, H)
    pa, pb = a.position, b.position
    solve_distance(c, H)
    assert vnorm(vsub(a.position, pa)) < 1e-12
    assert vnorm(vsub(b.position, pb)) < 1e-12


def test_distance_conserves_weighted_center():
    rng = random.Random(4)
    for _ in range(50):
        ma, mb = rng.uniform(0.1, 10.0), rng.uniform(0.1, 10.0)
        a = Particle((rng.uniform(-1, 1),) * 3, inverse_mass=1.0 / ma)
        b = Particle((rng.uniform(1.5, 3),) * 3, inverse_mass=1.0 / mb)
        center0 = vadd_scaled(a.position, ma, b.position, mb)
        solve_distance(DistanceConstraint(a=a, b=b, rest=rng.uniform(0.1, 2.0)), H)
        center1 = vadd_scaled(a.position, ma, b.position, mb)
        assert vnorm(vsub(center0, center1)) < 1e-9


def vadd_scaled(p1, m1, p2, m2):
    return tuple(m1 * a + m2 * b for a, b in zip(p1, p2))


def two_cubes():
    a = make_rigid_body(Box((0.5, 0.5, 0.5)), 1.0, (0.0, 0.0, 0.0))
    b = make_rigid_body(Box((0.5, 0.5, 0.5)), 1.0, (2.0, 0.0, 0.0))
    return a, b


def test_hinge_aligned_is_noop():
    a, b = two_cubes()
    c = HingeConstraint(body_a=a, body_b=b,
                        axis_a_local=(0.0, 1.0, 0.0), axis_b_local=(0.0, 1.0, 0.0))
    assert solve_hinge(c, H) is None


def test_hinge_error_and_axis():
    a, b = two_cubes()
    b.orientation = qfrom_axis_angle((0.0, 0.0, 1.0), math.pi / 2)
    # World axes (0,1,0) and (-1,0,0): error |a1 x a2| = 1, axis along their cross.
    c = HingeConstraint(body_a=a, body_b=b,
                        axis_a_local=(0.0, 1.0, 0.0), axis_b_local=(0.0, 1.0, 0.0))
    lam = solve_hinge(c, H)
    # denom = 2 * 6 (unit cube I = 1/6 about any axis), error 1
    assert math.isclose(lam, 1.0 / 12.0, rel_tol=1e-9)


def test_hinge_converges_under_repeated_solves():
    a, b = two_cubes()
    b.orientation = qfrom_axis_angle((1.0, 1.0, 0.0), 0.8)
    c = HingeConstraint(body_a=a, body_b=b,
                        axis_a_local=(0.0, 1.0, 0.0), axis_b_local=(0.0, 1.0, 0.0))
    for _ in range(200):
        solve_hinge(c, H)
    a1 = rotate(a.orientation, (0.0, 1.0, 0.0))
    a2 = rotate(b.orientation, (0.0, 1.0, 0.0))
    assert vnorm(vcross(a1, a2)) < 1e-6


def test_ball_joint_inside_cone_is_noop():
    a, b = two_cubes()
    b.orientation = qfrom_axis_angle((0.0, 0.0, 1.0), math.pi / 8)
    c = BallJointConstraint(body_a=a, body_b=b, max_angle=math.pi / 4)
    assert solve_ball_joint(c, H) is None


def test_ball_joint_error_value():
    a, b = two_cubes()
    b.orientation = qfrom_axis_angle((0.0, 0.0, 1.0), math.pi / 2)
    c = BallJointConstraint(body_a=a, body_b=b,
                            axis_a_local=(0.0, 1.0, 0.0), axis_b_local=(0.0, 1.0, 0.0),
                            max_angle=math.pi / 4)
    lam = solve_ball_joint(c, H)
    expected_error = 1.0 * (math.pi / 2 - math.pi / 4)
    assert math.isclose(lam, expected_error / 12.0, rel_tol=1e-9)


def test_ball_joint_monotone_angle_reduction():
    a, b = two_cubes()
    b.orientation = qfrom_axis_angle((0.0, 0.0, 1.0), math.pi / 4 + 0.05)
    c = BallJointConstraint(body_a=a, body_b=b, axis_a_local=(0.0, 1.0, 0.0),
                            axis_b_local=(0.0, 1.0, 0.0), max_angle=math.pi / 4)
    def angle():
        a1 = rotate(a.orientation, (0.0, 1.0, 0.0))
        a2 = rotate(b.orientation, (0.0, 1.0, 0.0))
        return math.atan2(vnorm(vcross(a1, a2)), vdot(a1, a2))
    prev = angle()
    for _ in range(20):
        solve_ball_joint(c, H)
        cur = angle()
        assert cur <= prev + 1e-12
        prev = cur


def test_ball_joint_antiparallel_fallback():
    a, b = two_cubes()
    b.orientation = qfrom_axis_angle((1.0, 0.0, 0.0), math.pi)
    c = BallJointConstraint(body_a=a, body_b=b, axis_a_local=(0.0, 1.0, 0.0),
                            axis_b_local=(0.0, 1.0, 0.0), max_angle=math.pi / 4)
    assert solve_ball_joint(c, H) is not None  # singular config still corrected


def regular_tetra(scale=1.0, inflate=1.0):
    base = ((1.0, 1.0, 1.0), (1.0, -1.0, -1.0), (-1.0, -1.0, 1.0), (-1.0, 1.0, -1.0))
    return [Particle(vscale(v, scale * inflate)) for v in base]


def test_volume_at_rest_is_noop():
    parts = regular_tetra(0.5)
    rest = volume6(*(p.position for p in parts)) / 6.0
    c = VolumeConstraint(p1=parts[0], p2=parts[1], p3=parts[2], p4=parts[3],
                         rest_volume=rest)
    assert solve_volume(c, H) == 0.0
    assert parts[0].position == (0.5, 0.5, 0.5)


def test_volume_gradient_matches_finite_differences():
    rng = random.Random(9)
    for _ in range(100):
        pts = [tuple(rng.uniform(-1, 1) for _ in range(3)) for _ in range(4)]
        grads = volume_gradients(*pts)
        eps = 1e-6
        for i in range(4):
            for axis in range(3):
                plus = [list(p) for p in pts]
                minus = [list(p) for p in pts]
                plus[i][axis] += eps
                minus[i][axis] -= eps
                fd = (volume6(*map(tuple, plus)) - volume6(*map(tuple, minus))) / (2 * eps)
                scale = max(abs(fd), abs(grads[i][axis]), 1.0)
                assert abs(fd - grads[i][axis]) / scale < 1e-6


def test_volume_projection_restores_rest_volume():
    parts = regular_tetra(0.5)
    rest = volume6(*(p.position for p in parts)) / 6.0
    for p in parts:
        p.position = vscale(p.position, 1.1)
    c = VolumeConstraint(p1=parts[0], p2=parts[1], p3=parts[2], p4=parts[3],
                         rest_volume=rest)
    for _ in range(200):
        solve_volume(c, H)
    final = volume6(*(p.position for p in parts)) / 6.0
    assert abs(final - rest) < 1e-9


def test_anchor_at_target_is_noop():
    body = Particle((1.0, 0.0, 0.0))
    c = AnchorConstraint(body=body, path=[(1.0, 0.0, 0.0)])
    assert solve_anchor(c, H, 0, 0, 4) is None


def test_anchor_substep_interpolation_targets():
    c = AnchorConstraint(body=None, path=[(0.0, 0.0, 0.0), (1.0, 0.0, 0.0)])
    for substep, expected in enumerate((0.25, 0.5, 0.75, 1.0)):
        body = Particle((0.0, 0.0, 0.0))
        c.body = body
        solve_anchor(c, H, 0, substep, 4)
        assert math.isclose(body.position[0], expected, rel_tol=1e-12)


def test_anchor_free_body_lands_on_target():
    body = make_rigid_body(Sphere(0.5), 1.0, (0.3, -0.7, 0.2))
    c = AnchorConstraint(body=body, r_local=(0.0, 0.0, 0.0), path=[(1.0, 2.0, 3.0)])
    solve_anchor(c, H, 5, 0, 1)
    assert vnorm(vsub(body.position, (1.0, 2.0, 3.0))) < 1e-12


def test_constraint_force_values():
    assert constraint_force(0.0, (1.0, 0.0, 0.0), 0.01) == (0.0, 0.0, 0.0)
    f = constraint_force(0.01, (1.0, 0.0, 0.0), 0.01)
    assert math.isclose(vnorm(f), 100.0, rel_tol=1e-12)


def test_constraint_force_hanging_equilibrium():
    """A unit mass hanging on a rigid wire: the extracted force approaches
    m*g within 2 percent once the pendulum has settled."""
    from pbrbd.engine import Scene, SolverConfig, step

    scene = Scene(config=SolverConfig(num_substeps=20))
    anchor = scene.add_body(make_static_body(position=(0.0, 2.0, 0.0)))
    body = scene.add_body(make_rigid_body(Sphere(0.1), 1.0, (0.0, 1.0, 0.0)))
    wire = DistanceConstraint(a=anchor, b=body, rest=1.0)
    scene.add_constraint(wire)
    for _ in range(60):
        step(scene)
    h = scene.config.frame_dt / scene.config.num_substeps
    force = wire.lam / (h * h)  # gradient is unit length
    assert force == pytest.approx(9.81, rel=0.02)


def test_hinge_opposite_rotations_conserve_symmetry():
    # Two identical free bodies twisted opposite ways end mirrored.
    a, b = two_cubes()
    a.orientation = qfrom_axis_angle((0.0, 0.0, 1.0), 0.3)
    b.orientation = qfrom_axis_angle((0.0, 0.0, 1.0), -0.3)
    c = HingeConstraint(body_a=a, body_b=b,
                        axis_a_local=(0.0, 1.0, 0.0), axis_b_local=(0.0, 1.0, 0.0))
    for _ in range(100):
        solve_hinge(c, H)
    qa, qb = a.orientation, b.orientation
    assert abs(qa[3] + qb[3]) < 1e-9  # equal and opposite z twists
