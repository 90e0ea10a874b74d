"""Double-precision 3-vector, quaternion and 3x3 matrix arithmetic.

Everything in the engine runs on plain tuples of Python floats: values are
immutable-in / new-value-out, so they are safe to share across threads.
Quaternions are scalar-first (s, x, y, z); the pure quaternion of a vector v
is (0, v).  Matrices are row-major tuples of row tuples.
"""
from __future__ import annotations

import math
from typing import Tuple

Vec3 = Tuple[float, float, float]
Quat = Tuple[float, float, float, float]  # (s, x, y, z)
Mat3 = Tuple[Vec3, Vec3, Vec3]

ZERO3: Vec3 = (0.0, 0.0, 0.0)
IDENTITY_Q: Quat = (1.0, 0.0, 0.0, 0.0)
IDENTITY_M: Mat3 = ((1.0, 0.0, 0.0), (0.0, 1.0, 0.0), (0.0, 0.0, 1.0))
ZERO_M: Mat3 = ((0.0, 0.0, 0.0), (0.0, 0.0, 0.0), (0.0, 0.0, 0.0))


class DegenerateMatrixError(ValueError):
    """Raised when a matrix inversion meets a (numerically) singular input."""


def vadd(a: Vec3, b: Vec3) -> Vec3:
    return (a[0] + b[0], a[1] + b[1], a[2] + b[2])


def vsub(a: Vec3, b: Vec3) -> Vec3:
    return (a[0] - b[0], a[1] - b[1], a[2] - b[2])


def vscale(a: Vec3, s: float) -> Vec3:
    return (a[0] * s, a[1] * s, a[2] * s)


def vneg(a: Vec3) -> Vec3:
    return (-a[0], -a[1], -a[2])


def vdot(a: Vec3, b: Vec3) -> float:
    return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]


def vcross(a: Vec3, b: Vec3) -> Vec3:
    return (
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    )


def vnorm(a: Vec3) -> float:
    return math.sqrt(a[0] * a[0] + a[1] * a[1] + a[2] * a[2])


def vnorm2(a: Vec3) -> float:
    return a[0] * a[0] + a[1] * a[1] + a[2] * a[2]


def vnormalize(a: Vec3) -> Vec3:
    n = vnorm(a)
    if n == 0.0:
        return ZERO3
    inv = 1.0 / n
    return (a[0] * inv, a[1] * inv, a[2] * inv)


def vlerp(a: Vec3, b: Vec3, t: float) -> Vec3:
    return (
        a[0] + (b[0] - a[0]) * t,
        a[1] + (b[1] - a[1]) * t,
        a[2] + (b[2] - a[2]) * t,
    )


def perpendicular(a: Vec3) -> Vec3:
    """Any unit vector perpendicular to a (a must be nonzero)."""
    # Cross against the axis a is least aligned with.
    if abs(a[0]) <= abs(a[1]) and abs(a[0]) <= abs(a[2]):
        return vnormalize(vcross(a, (1.0, 0.0, 0.0)))
    if abs(a[1]) <= abs(a[2]):
        return vnormalize(vcross(a, (0.0, 1.0, 0.0)))
    return vnormalize(vcross(a, (0.0, 0.0, 1.0)))


def qmul(a: Quat, b: Quat) -> Quat:
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return (
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    )


def qconj(q: Quat) -> Quat:
    return (q[0], -q[1], -q[2], -q[3])


def qnorm(q: Quat) -> float:
    return math.sqrt(q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3])


def qnormalize(q: Quat) -> Quat:
    n = qnorm(q)
    if n == 0.0:
        return IDENTITY_Q
    inv = 1.0 / n
    return (q[0] * inv, q[1] * inv, q[2] * inv, q[3] * inv)


def qfrom_axis_angle(axis: Vec3, angle: float) -> Quat:
    n = vnorm(axis)
    if n == 0.0:
        return IDENTITY_Q
    half = 0.5 * angle
    s = math.sin(half) / n
    return (math.cos(half), axis[0] * s, axis[1] * s, axis[2] * s)


def rotate(q: Quat, v: Vec3) -> Vec3:
    """Rotate v by unit quaternion q, i.e. q v q^-1."""
    # t = 2 q_vec x v ; v' = v + s t + q_vec x t
    qw, qx, qy, qz = q
    vx, vy, vz = v
    tx = 2.0 * (qy * vz - qz * vy)
    ty = 2.0 * (qz * vx - qx * vz)
    tz = 2.0 * (qx * vy - qy * vx)
    return (
        vx + qw * tx + qy * tz - qz * ty,
        vy + qw * ty + qz * tx - qx * tz,
        vz + qw * tz + qx * ty - qy * tx,
    )


def rotate_inv(q: Quat, v: Vec3) -> Vec3:
    """Rotate v by the inverse of unit quaternion q (world -> body frame)."""
    qw, qx, qy, qz = q
    vx, vy, vz = v
    tx = 2.0 * (qz * vy - qy * vz)
    ty = 2.0 * (qx * vz - qz * vx)
    tz = 2.0 * (qy * vx - qx * vy)
    return (
        vx + qw * tx + (-qy) * tz - (-qz) * ty,
        vy + qw * ty + (-qz) * tx - (-qx) * tz,
        vz + qw * tz + (-qx) * ty - (-qy) * tx,
    )


def integrate_orientation(q: Quat, w_world: Vec3, h: float) -> Quat:
    """One explicit Euler step of dq/dt = 0.5 (0, w) q, then renormalize."""
    qw, qx, qy, qz = q
    wx, wy, wz = w_world
    half_h = 0.5 * h
    return qnormalize((
        qw + half_h * (-wx * qx - wy * qy - wz * qz),
        qx + half_h * (wx * qw + wy * qz - wz * qy),
        qy + half_h * (wy * qw + wz * qx - wx * qz),
        qz + half_h * (wz * qw + wx * qy - wy * qx),
    ))


def qto_matrix(q: Quat) -> Mat3:
    w, x, y, z = q
    xx, yy, zz = x * x, y * y, z * z
    xy, xz, yz = x * y, x * z, y * z
    wx, wy, wz = w * x, w * y, w * z
    return (
        (1.0 - 2.0 * (yy + zz), 2.0 * (xy - wz), 2.0 * (xz + wy)),
        (2.0 * (xy + wz), 1.0 - 2.0 * (xx + zz), 2.0 * (yz - wx)),
        (2.0 * (xz - wy), 2.0 * (yz + wx), 1.0 - 2.0 * (xx + yy)),
    )


def mat_diag(x: float, y: float, z: float) -> Mat3:
    return ((x, 0.0, 0.0), (0.0, y, 0.0), (0.0, 0.0, z))


def mat_vec(m: Mat3, v: Vec3) -> Vec3:
    return (
        m[0][0] * v[0] + m[0][1] * v[1] + m[0][2] * v[2],
        m[1][0] * v[0] + m[1][1] * v[1] + m[1][2] * v[2],
        m[2][0] * v[0] + m[2][1] * v[1] + m[2][2] * v[2],
    )


def mat_mul(a: Mat3, b: Mat3) -> Mat3:
    rows = []
    for i in range(3):
        rows.append((
            a[i][0] * b[0][0] + a[i][1] * b[1][0] + a[i][2] * b[2][0],
            a[i][0] * b[0][1] + a[i][1] * b[1][1] + a[i][2] * b[2][1],
            a[i][0] * b[0][2] + a[i][1] * b[1][2] + a[i][2] * b[2][2],
        ))
    return (rows[0], rows[1], rows[2])


def mat_det(m: Mat3) -> float:
    return (
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    )


def invert_spd(m: Mat3) -> Mat3:
    """Invert a symmetric positive-definite 3x3 matrix (adjugate form)."""
    det = mat_det(m)
    if abs(det) < 1e-300:
        raise DegenerateMatrixError(f"matrix is numerically singular (det={det!r})")
    inv = 1.0 / det
    return (
        (
            (m[1][1] * m[2][2] - m[1][2] * m[2][1]) * inv,
            (m[0][2] * m[2][1] - m[0][1] * m[2][2]) * inv,
            (m[0][1] * m[1][2] - m[0][2] * m[1][1]) * inv,
        ),
        (
            (m[1][2] * m[2][0] - m[1][0] * m[2][2]) * inv,
            (m[0][0] * m[2][2] - m[0][2] * m[2][0]) * inv,
            (m[0][2] * m[1][0] - m[0][0] * m[1][2]) * inv,
        ),
        (
            (m[1][0] * m[2][1] - m[1][1] * m[2][0]) * inv,
            (m[0][1] * m[2][0] - m[0][0] * m[2][1]) * inv,
            (m[0][0] * m[1][1] - m[0][1] * m[1][0]) * inv,
        ),
    )
