"""Compliant constraint records and their projection solvers.

All constraints share one projection scheme: the multiplier is
lambda = C / (sum w_i |grad C_i|^2 + compliance / h^2) and the applied
correction is dx_i = -lambda * w_i * grad C_i, so a rigid solve always
reduces |C|.  Multipliers accumulate over the iterations of one substep and
are reset by the engine at the next substep start; lambda * grad / h^2
estimates the constraint force.

Positional constraint endpoints may be particles or rigid bodies with body
frame attachment offsets; angular constraints act on rigid bodies only.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple, Union

from .bodies import (
    Particle,
    RigidBody,
    apply_angular_correction,
    apply_positional_correction,
    generalized_inverse_mass_angular,
    generalized_inverse_mass_positional,
)
from .vecmath import (
    Vec3,
    ZERO3,
    perpendicular,
    rotate,
    vadd,
    vcross,
    vdot,
    vlerp,
    vnorm,
    vscale,
    vsub,
)

Endpoint = Union[Particle, RigidBody]

DEGENERATE_EPS = 1e-12


class SingularConstraintError(ValueError):
    """Raised when every endpoint is static and the constraint is rigid."""


def xpbd_lambda(error: float, grad_terms: Sequence[Tuple[float, Vec3]],
                compliance: float, h: float) -> float:
    """Generic multiplier: error / (sum w_i |grad_i|^2 + compliance / h^2)."""
    denom = compliance / (h * h)
    for w, grad in grad_terms:
        denom += w * vdot(grad, grad)
    if denom == 0.0:
        raise SingularConstraintError(
            "rigid constraint between static endpoints has no solution")
    return error / denom


@dataclass
class _ConstraintBase:
    compliance: float = 0.0  # m/N; 0 is rigid, large values act like springs
    lam: float = 0.0  # accumulated multiplier, reset each substep

    def reset_lambda(self) -> None:
        self.lam = 0.0


@dataclass
class DistanceConstraint(_ConstraintBase):
    """Keeps two attachment points at (or within, in max mode) a rest distance."""
    a: Endpoint = None
    b: Endpoint = None
    r_a_local: Vec3 = ZERO3
    r_b_local: Vec3 = ZERO3
    rest: float = 0.0
    mode: str = "exact"  # "exact" or "max"

    def __post_init__(self):
        if self.rest < 0.0:
            raise ValueError("rest distance must be non-negative")
        if self.mode not in ("exact", "max"):
            raise ValueError(f"unknown distance mode {self.mode!r}")


@dataclass
class HingeConstraint(_ConstraintBase):
    """Keeps one body-frame axis of each body aligned with the other."""
    body_a: RigidBody = None
    body_b: RigidBody = None
    axis_a_local: Vec3 = (0.0, 1.0, 0.0)
    axis_b_local: Vec3 = (0.0, 1.0, 0.0)
    # Secondary reference axis; carried on the record but not used by the solve.
    secondary_axis_local: Optional[Vec3] = None


@dataclass
class BallJointConstraint(_ConstraintBase):
    """Limits the angle between two body axes to a cone of max_angle."""
    body_a: RigidBody = None
    body_b: RigidBody = None
    axis_a_local: Vec3 = (0.0, 1.0, 0.0)
    axis_b_local: Vec3 = (0.0, 1.0, 0.0)
    max_angle: float = math.pi / 4

    def __post_init__(self):
        if not 0.0 < self.max_angle < math.pi:
            raise ValueError("max_angle must lie in (0, pi)")


@dataclass
class VolumeConstraint(_ConstraintBase):
    """Keeps the signed volume of a particle tetrahedron at its rest value."""
    p1: Particle = None
    p2: Particle = None
    p3: Particle = None
    p4: Particle = None
    rest_volume: float = 0.0

    def __post_init__(self):
        if self.rest_volume <= 0.0:
            raise ValueError("rest volume must be positive")


@dataclass
class AnchorConstraint(_ConstraintBase):
    """Pins a body point to a scripted path, interpolated per substep.

    The path holds one world-space target per frame; substeps lerp between the
    bracketing frame samples so coarse input sampling still drives the body
    smoothly.
    """
    body: Endpoint = None
    r_local: Vec3 = ZERO3
    path: List[Vec3] = field(default_factory=list)


Constraint = Union[DistanceConstraint, HingeConstraint, BallJointConstraint,
                   VolumeConstraint, AnchorConstraint]


# --------------------------------------------------------------------------
# endpoint helpers shared by positional solves (particles or bodies)
# --------------------------------------------------------------------------

def attachment_point(e: Endpoint, r_local: Vec3) -> Vec3:
    if isinstance(e, Particle):
        return e.position
    return e.world_point(r_local)


def _gim(e: Optional[Endpoint], r_local: Vec3, direction: Vec3) -> float:
    if e is None:
        return 0.0
    if isinstance(e, Particle):
        return e.inverse_mass
    return generalized_inverse_mass_positional(e, r_local, direction)


def _apply(e: Optional[Endpoint], r_local: Vec3, p_world: Vec3) -> None:
    if e is None:
        return
    if isinstance(e, Particle):
        if e.inverse_mass != 0.0:
            e.position = vadd(e.position, vscale(p_world, e.inverse_mass))
        return
    apply_positional_correction(e, r_local, p_world)


def positional_lambda(a: Optional[Endpoint], r_a: Vec3,
                      b: Optional[Endpoint], r_b: Vec3,
                      grad_dir: Vec3, error: float,
                      compliance: float, h: float) -> Tuple[float, float, float]:
    """Multiplier for a two-endpoint positional constraint with unit gradient
    grad_dir (the direction of increasing error seen by endpoint a)."""
    w_a = _gim(a, r_a, grad_dir)
    w_b = _gim(b, r_b, grad_dir)
    denom = w_a + w_b + compliance / (h * h)
    if denom == 0.0:
        raise SingularConstraintError(
            "rigid constraint between static endpoints has no solution")
    return error / denom, w_a, w_b


def apply_positional_pair(a: Optional[Endpoint], r_a: Vec3,
                          b: Optional[Endpoint], r_b: Vec3,
                          grad_dir: Vec3, lam: float) -> None:
    """Apply dx = -lambda w grad to a and the opposite correction to b."""
    p = vscale(grad_dir, lam)
    _apply(a, r_a, (-p[0], -p[1], -p[2]))
    _apply(b, r_b, p)


def solve_positional_pair(a, r_a, b, r_b, grad_dir, error, compliance, h) -> float:
    lam, _, _ = positional_lambda(a, r_a, b, r_b, grad_dir, error, compliance, h)
    apply_positional_pair(a, r_a, b, r_b, grad_dir, lam)
    return lam


# --------------------------------------------------------------------------
# per-type solvers
# --------------------------------------------------------------------------

def solve_distance(c: DistanceConstraint, h: float) -> Optional[float]:
    """Project a distance constraint; returns the multiplier or None if the
    constraint was inactive or degenerate this iteration."""
    pa = attachment_point(c.a, c.r_a_local)
    pb = attachment_point(c.b, c.r_b_local)
    delta = vsub(pb, pa)
    dist = vnorm(delta)
    if dist < DEGENERATE_EPS:
        if c.rest == 0.0:
            return None  # coincident points: already satisfied
        return None  # no defined gradient this iteration
    error = dist - c.rest
    if c.mode == "max" and error <= 0.0:
        return None
    u = vscale(delta, 1.0 / dist)
    grad = (-u[0], -u[1], -u[2])  # dC/d(pa)
    lam = solve_positional_pair(c.a, c.r_a_local, c.b, c.r_b_local,
                                grad, error, c.compliance, h)
    c.lam += lam
    return lam


def solve_anchor(c: AnchorConstraint, h: float, frame_index: int,
                 substep_index: int, num_substeps: int) -> Optional[float]:
    """Pull the body point toward the interpolated path target (distance-0
    constraint against a static point)."""
    if not c.path:
        return None
    last = len(c.path) - 1
    s0 = c.path[min(frame_index, last)]
    s1 = c.path[min(frame_index + 1, last)]
    target = vlerp(s0, s1, (substep_index + 1) / num_substeps)
    pa = attachment_point(c.body, c.r_local)
    delta = vsub(target, pa)
    dist = vnorm(delta)
    if dist < DEGENERATE_EPS:
        return None
    grad = vscale(delta, -1.0 / dist)  # C = |pa - target| grows opposite delta
    lam = solve_positional_pair(c.body, c.r_local, None, ZERO3,
                                grad, dist, c.compliance, h)
    c.lam += lam
    return lam


def _solve_axis_pair(body_a: RigidBody, body_b: RigidBody, axis: Vec3,
                     error: float, compliance: float, h: float) -> float:
    w_a = generalized_inverse_mass_angular(body_a, axis)
    w_b = generalized_inverse_mass_angular(body_b, axis)
    denom = w_a + w_b + compliance / (h * h)
    if denom == 0.0:
        raise SingularConstraintError(
            "rigid angular constraint between static bodies has no solution")
    lam = error / denom
    apply_angular_correction(body_a, axis, lam, 1.0)
    apply_angular_correction(body_b, axis, lam, -1.0)
    return lam


def solve_hinge(c: HingeConstraint, h: float) -> Optional[float]:
    """Align the two hinge axes: error |a1 x a2|, correction about a1 x a2."""
    a1 = rotate(c.body_a.orientation, c.axis_a_local)
    a2 = rotate(c.body_b.orientation, c.axis_b_local)
    cr = vcross(a1, a2)
    s = vnorm(cr)
    if s < DEGENERATE_EPS:
        return None
    axis = vscale(cr, 1.0 / s)
    lam = _solve_axis_pair(c.body_a, c.body_b, axis, s, c.compliance, h)
    c.lam += lam
    return lam


def solve_ball_joint(c: BallJointConstraint, h: float) -> Optional[float]:
    """Clamp the angle between the two axes to the cone: error
    |a1 x a2| * (angle - max_angle), applied only past the bound."""
    a1 = rotate(c.body_a.orientation, c.axis_a_local)
    a2 = rotate(c.body_b.orientation, c.axis_b_local)
    cr = vcross(a1, a2)
    s = vnorm(cr)
    angle = math.atan2(s, vdot(a1, a2))
    if angle <= c.max_angle:
        return None
    if s < DEGENERATE_EPS:
        # Anti-parallel axes: the cross product vanishes at the largest
        # possible error; any axis perpendicular to a1 corrects it.
        axis = perpendicular(a1)
    else:
        axis = vscale(cr, 1.0 / s)
    error = s * (angle - c.max_angle)
    if s < DEGENERATE_EPS:
        error = angle - c.max_angle
    lam = _solve_axis_pair(c.body_a, c.body_b, axis, error, c.compliance, h)
    c.lam += lam
    return lam


def volume6(p1: Vec3, p2: Vec3, p3: Vec3, p4: Vec3) -> float:
    """Six times the signed tetrahedron volume."""
    return vdot(vsub(p2, p1), vcross(vsub(p3, p1), vsub(p4, p1)))


def volume_gradients(p1: Vec3, p2: Vec3, p3: Vec3, p4: Vec3) -> Tuple[Vec3, Vec3, Vec3, Vec3]:
    """Analytic gradients of the 6x signed volume: opposite-face normals
    scaled by twice the face area."""
    return (
        vcross(vsub(p4, p2), vsub(p3, p2)),
        vcross(vsub(p3, p1), vsub(p4, p1)),
        vcross(vsub(p4, p1), vsub(p2, p1)),
        vcross(vsub(p2, p1), vsub(p3, p1)),
    )


def solve_volume(c: VolumeConstraint, h: float) -> Optional[float]:
    parts = (c.p1, c.p2, c.p3, c.p4)
    pos = tuple(p.position for p in parts)
    grads = volume_gradients(*pos)
    if all(vdot(g, g) < DEGENERATE_EPS * DEGENERATE_EPS for g in grads):
        return None  # coplanar collapse: no usable gradients this iteration
    error = volume6(*pos) - 6.0 * c.rest_volume
    lam = xpbd_lambda(error, [(p.inverse_mass, g) for p, g in zip(parts, grads)],
                      c.compliance, h)
    for p, g in zip(parts, grads):
        if p.inverse_mass != 0.0:
            p.position = vadd(p.position, vscale(g, -lam * p.inverse_mass))
    c.lam += lam
    return lam


def constraint_force(lam: float, gradient: Vec3, h: float) -> Vec3:
    """Force estimate lambda * n / h^2; read it as a force for positional
    constraints and as a torque for angular ones."""
    return vscale(gradient, lam / (h * h))


def solve_constraint(c, h: float, frame_index: int = 0,
                     substep_index: int = 0, num_substeps: int = 1) -> Optional[float]:
    """Dispatch a single constraint solve (one Gauss-Seidel visit)."""
    if isinstance(c, DistanceConstraint):
        return solve_distance(c, h)
    if isinstance(c, HingeConstraint):
        return solve_hinge(c, h)
    if isinstance(c, BallJointConstraint):
        return solve_ball_joint(c, h)
    if isinstance(c, VolumeConstraint):
        return solve_volume(c, h)
    if isinstance(c, AnchorConstraint):
        return solve_anchor(c, h, frame_index, substep_index, num_substeps)
    raise TypeError(f"unknown constraint type {type(c).__name__}")


def constraint_endpoints(c) -> List[Endpoint]:
    """The bodies/particles a constraint may move (used for scheduling)."""
    if isinstance(c, DistanceConstraint):
        return [c.a, c.b]
    if isinstance(c, (HingeConstraint, BallJointConstraint)):
        return [c.body_a, c.body_b]
    if isinstance(c, VolumeConstraint):
        return [c.p1, c.p2, c.p3, c.p4]
    if isinstance(c, AnchorConstraint):
        return [c.body]
    raise TypeError(f"unknown constraint type {type(c).__name__}")
