"""Particle and rigid body state plus the positional/angular correction kernels.

Angular velocity is stored in the body frame and converted to the world frame
only where integration or contact kinematics need it.  Static bodies are
encoded by zero inverse mass together with a zero inverse inertia tensor; all
correction kernels leave them untouched.

The kernels mutate the body in place and return it.  Callers (the solver
scheduler) guarantee that no body is handed to two kernels concurrently.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

from .collision import Box, Capsule, HalfSpace, Sphere
from .vecmath import (
    IDENTITY_Q,
    Mat3,
    Quat,
    Vec3,
    ZERO3,
    ZERO_M,
    invert_spd,
    mat_diag,
    mat_vec,
    qmul,
    qnormalize,
    rotate,
    rotate_inv,
    vadd,
    vcross,
    vdot,
    vscale,
)


class InvalidShapeError(ValueError):
    """Raised when an inertia tensor is requested for an unusable shape."""


@dataclass
class Material:
    restitution: float = 0.0
    static_friction: float = 0.0
    dynamic_friction: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.restitution <= 1.0:
            raise ValueError(f"restitution must be in [0, 1], got {self.restitution}")
        if self.static_friction < 0.0 or self.dynamic_friction < 0.0:
            raise ValueError("friction coefficients must be non-negative")


@dataclass
class Particle:
    position: Vec3
    velocity: Vec3 = ZERO3
    inverse_mass: float = 1.0  # 0 makes the particle static
    prev_position: Vec3 = None
    external_force: Vec3 = ZERO3

    def __post_init__(self):
        if self.inverse_mass < 0.0:
            raise ValueError("inverse mass must be non-negative")
        if self.prev_position is None:
            self.prev_position = self.position

    @property
    def is_static(self) -> bool:
        return self.inverse_mass == 0.0


@dataclass
class RigidBody:
    position: Vec3
    orientation: Quat = IDENTITY_Q
    velocity: Vec3 = ZERO3
    angular_velocity_local: Vec3 = ZERO3  # body frame
    inverse_mass: float = 1.0
    inertia_body: Mat3 = None
    inverse_inertia_body: Mat3 = None
    external_force: Vec3 = ZERO3
    external_torque_local: Vec3 = ZERO3
    material: Material = field(default_factory=Material)
    collider: object = None
    prev_position: Vec3 = None
    prev_orientation: Quat = None
    index: int = -1

    def __post_init__(self):
        if self.inverse_mass < 0.0:
            raise ValueError("inverse mass must be non-negative")
        if self.inertia_body is None:
            self.inertia_body = mat_diag(1.0, 1.0, 1.0) if self.inverse_mass > 0.0 else ZERO_M
        if self.inverse_inertia_body is None:
            self.inverse_inertia_body = (
                invert_spd(self.inertia_body) if self.inverse_mass > 0.0 else ZERO_M
            )
        if self.prev_position is None:
            self.prev_position = self.position
        if self.prev_orientation is None:
            self.prev_orientation = self.orientation

    @property
    def is_static(self) -> bool:
        return self.inverse_mass == 0.0

    @property
    def angular_velocity_world(self) -> Vec3:
        return rotate(self.orientation, self.angular_velocity_local)

    def world_point(self, r_local: Vec3) -> Vec3:
        return vadd(self.position, rotate(self.orientation, r_local))

    def prev_world_point(self, r_local: Vec3) -> Vec3:
        return vadd(self.prev_position, rotate(self.prev_orientation, r_local))

    def point_velocity(self, r_local: Vec3) -> Vec3:
        """World velocity of a body-fixed point."""
        r_world = rotate(self.orientation, r_local)
        return vadd(self.velocity, vcross(self.angular_velocity_world, r_world))


def inertia_tensor(shape, mass: float) -> Mat3:
    """Body-frame inertia tensor of a solid primitive of the given mass."""
    if mass <= 0.0:
        raise InvalidShapeError(f"mass must be positive, got {mass}")
    if isinstance(shape, Sphere):
        i = 0.4 * mass * shape.radius * shape.radius
        return mat_diag(i, i, i)
    if isinstance(shape, Box):
        hx, hy, hz = shape.half_extents
        # m/12 * (b^2 + c^2) per axis, with full extents b = 2*h.
        return mat_diag(
            mass / 3.0 * (hy * hy + hz * hz),
            mass / 3.0 * (hx * hx + hz * hz),
            mass / 3.0 * (hx * hx + hy * hy),
        )
    if isinstance(shape, Capsule):
        # Cylinder plus two hemispherical caps, composed with parallel-axis
        # offsets for the caps.
        r, hl = shape.radius, shape.half_length
        length = 2.0 * hl
        vol_cyl = math.pi * r * r * length
        vol_sph = 4.0 / 3.0 * math.pi * r ** 3
        density = mass / (vol_cyl + vol_sph)
        m_cyl = density * vol_cyl
        m_sph = density * vol_sph  # both caps together
        axial = 0.5 * m_cyl * r * r + 0.4 * m_sph * r * r
        transverse = (
            m_cyl * (length * length / 12.0 + r * r / 4.0)
            + m_sph * (0.4 * r * r + length * length / 4.0 + 0.375 * r * length)
        )
        return mat_diag(transverse, axial, transverse)
    if isinstance(shape, HalfSpace):
        raise InvalidShapeError("half-spaces are static only and carry no inertia")
    raise InvalidShapeError(f"unknown shape {shape!r}")


def make_rigid_body(shape, mass: float, position: Vec3,
                    orientation: Quat = IDENTITY_Q,
                    velocity: Vec3 = ZERO3,
                    angular_velocity_local: Vec3 = ZERO3,
                    material: Optional[Material] = None) -> RigidBody:
    inertia = inertia_tensor(shape, mass)
    return RigidBody(
        position=position,
        orientation=qnormalize(orientation),
        velocity=velocity,
        angular_velocity_local=angular_velocity_local,
        inverse_mass=1.0 / mass,
        inertia_body=inertia,
        inverse_inertia_body=invert_spd(inertia),
        material=material if material is not None else Material(),
        collider=shape,
    )


def make_static_body(shape=None, position: Vec3 = ZERO3,
                     orientation: Quat = IDENTITY_Q,
                     material: Optional[Material] = None) -> RigidBody:
    return RigidBody(
        position=position,
        orientation=qnormalize(orientation),
        inverse_mass=0.0,
        inertia_body=ZERO_M,
        inverse_inertia_body=ZERO_M,
        material=material if material is not None else Material(),
        collider=shape,
    )


def generalized_inverse_mass_positional(body: RigidBody, r_local: Vec3,
                                        correction_dir_world: Vec3) -> float:
    """Effective inverse mass seen by a positional correction applied at an
    offset: w + (r x (q^-1 d))^T I^-1 (r x (q^-1 d))."""
    if body.inverse_mass == 0.0:
        return 0.0
    if r_local == ZERO3:
        return body.inverse_mass
    # Inlined: d = q^-1 * dir, rot = r x d, rot . (I^-1 rot).
    qw, qx, qy, qz = body.orientation
    vx, vy, vz = correction_dir_world
    tx = 2.0 * (qz * vy - qy * vz)
    ty = 2.0 * (qx * vz - qz * vx)
    tz = 2.0 * (qy * vx - qx * vy)
    dx = vx + qw * tx - qy * tz + qz * ty
    dy = vy + qw * ty - qz * tx + qx * tz
    dz = vz + qw * tz - qx * ty + qy * tx
    rx, ry, rz = r_local
    cx = ry * dz - rz * dy
    cy = rz * dx - rx * dz
    cz = rx * dy - ry * dx
    m = body.inverse_inertia_body
    return body.inverse_mass + (
        cx * (m[0][0] * cx + m[0][1] * cy + m[0][2] * cz)
        + cy * (m[1][0] * cx + m[1][1] * cy + m[1][2] * cz)
        + cz * (m[2][0] * cx + m[2][1] * cy + m[2][2] * cz)
    )


def generalized_inverse_mass_angular(body: RigidBody, axis_world: Vec3) -> float:
    """Effective inverse inertia about a world axis: n_self^T I^-1 n_self."""
    n_self = rotate_inv(body.orientation, axis_world)
    return vdot(n_self, mat_vec(body.inverse_inertia_body, n_self))


def apply_positional_correction(body: RigidBody, r_local: Vec3, p_world: Vec3) -> RigidBody:
    """Apply a world-space correction impulse p at body offset r_local.

    The center of mass translates by inverse_mass * p; the orientation picks
    up the induced rotation q * (I^-1 (r x q^-1 p)) and is renormalized.
    The caller performs the lambda scaling.
    """
    if body.inverse_mass == 0.0:
        return body
    w = body.inverse_mass
    px, py, pz = p_world
    bx, by, bz = body.position
    body.position = (bx + px * w, by + py * w, bz + pz * w)
    if r_local != ZERO3:
        # Inlined chain: p_self = q^-1 p; rot = q (I^-1 (r x p_self));
        # q += 0.5 (0, rot) q, renormalized.
        qw, qx, qy, qz = body.orientation
        tx = 2.0 * (qz * py - qy * pz)
        ty = 2.0 * (qx * pz - qz * px)
        tz = 2.0 * (qy * px - qx * py)
        sx = px + qw * tx - qy * tz + qz * ty
        sy = py + qw * ty - qz * tx + qx * tz
        sz = pz + qw * tz - qx * ty + qy * tx
        rx, ry, rz = r_local
        cx = ry * sz - rz * sy
        cy = rz * sx - rx * sz
        cz = rx * sy - ry * sx
        m = body.inverse_inertia_body
        lx = m[0][0] * cx + m[0][1] * cy + m[0][2] * cz
        ly = m[1][0] * cx + m[1][1] * cy + m[1][2] * cz
        lz = m[2][0] * cx + m[2][1] * cy + m[2][2] * cz
        tx = 2.0 * (qy * lz - qz * ly)
        ty = 2.0 * (qz * lx - qx * lz)
        tz = 2.0 * (qx * ly - qy * lx)
        gx = lx + qw * tx + qy * tz - qz * ty
        gy = ly + qw * ty + qz * tx - qx * tz
        gz = lz + qw * tz + qx * ty - qy * tx
        nw = qw - 0.5 * (gx * qx + gy * qy + gz * qz)
        nx = qx + 0.5 * (gx * qw + gy * qz - gz * qy)
        ny = qy + 0.5 * (gy * qw + gz * qx - gx * qz)
        nz = qz + 0.5 * (gz * qw + gx * qy - gy * qx)
        inv = 1.0 / math.sqrt(nw * nw + nx * nx + ny * ny + nz * nz)
        body.orientation = (nw * inv, nx * inv, ny * inv, nz * inv)
    return body


def apply_angular_correction(body: RigidBody, axis_world: Vec3,
                             magnitude: float, sign: float = 1.0) -> RigidBody:
    """Apply an angular correction of the given magnitude about a world axis:
    p = n * lambda, rotated through the inverse inertia in the body frame,
    then added onto the quaternion and renormalized."""
    if body.inverse_mass == 0.0:
        return body
    q = body.orientation
    p = vscale(axis_world, magnitude)
    p_self = rotate_inv(q, p)
    p_world = rotate(q, mat_vec(body.inverse_inertia_body, p_self))
    dq = qmul((0.0, p_world[0], p_world[1], p_world[2]), q)
    half = 0.5 * sign
    body.orientation = qnormalize((
        q[0] + half * dq[0],
        q[1] + half * dq[1],
        q[2] + half * dq[2],
        q[3] + half * dq[3],
    ))
    return body
