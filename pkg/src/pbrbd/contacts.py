"""Contact solving: positional penetration and static friction, then the
velocity-level restitution and dynamic friction pass.

The positional side treats each contact as a rigid constraint whose error is
the penetration depth recomputed from the advected contact offsets.  Static
friction builds a second positional constraint that cancels the tangential
displacement of the contact points since the substep start and is discarded
(before touching any body) whenever its trial multiplier exceeds
mu_static * lambda_normal.

The velocity pass measures the current relative normal speed, replaces it
with the reflected pre-solve speed scaled by the combined restitution, and
distributes the change through the generalized inverse masses at the contact
point; dynamic friction then removes tangential speed up to
mu_dynamic * |lambda_normal| / h, never reversing it.
"""
from __future__ import annotations

import math
from typing import Optional

from .bodies import (
    RigidBody,
    apply_positional_correction,
    generalized_inverse_mass_positional,
)
from .collision import Contact
from .vecmath import (
    Vec3,
    mat_vec,
    rotate,
    rotate_inv,
    vadd,
    vcross,
    vdot,
    vnorm,
    vscale,
    vsub,
)

SLIP_EPS = 1e-15
SPEED_EPS = 1e-12


def combine_friction(mu_a: float, mu_b: float, rule: str = "geometric") -> float:
    if rule == "geometric":
        return math.sqrt(mu_a * mu_b)
    if rule == "minimum":
        return min(mu_a, mu_b)
    if rule == "multiply":
        return mu_a * mu_b
    raise ValueError(f"unknown friction combine rule {rule!r}")


def _advect(position: Vec3, q, r_local: Vec3) -> Vec3:
    qw, qx, qy, qz = q
    rx, ry, rz = r_local
    tx = 2.0 * (qy * rz - qz * ry)
    ty = 2.0 * (qz * rx - qx * rz)
    tz = 2.0 * (qx * ry - qy * rx)
    return (
        position[0] + rx + qw * tx + qy * tz - qz * ty,
        position[1] + ry + qw * ty + qz * tx - qx * tz,
        position[2] + rz + qw * tz + qx * ty - qy * tx,
    )


def current_depth(c: Contact) -> float:
    """Penetration depth at the current poses, from the advected offsets."""
    a, b = c.body_a, c.body_b
    pa = _advect(a.position, a.orientation, c.r_a_local)
    pb = _advect(b.position, b.orientation, c.r_b_local)
    n = c.normal
    return c.depth + ((pb[0] - pa[0]) * n[0] + (pb[1] - pa[1]) * n[1]
                      + (pb[2] - pa[2]) * n[2])


def solve_contact_position(c: Contact, h: float, slop: float = 0.0,
                           anchor: Optional[str] = None) -> Optional[float]:
    """Rigid positional solve of the penetration; accumulates lambda_normal.

    Depth is corrected down to the slop band, not to exact zero: resting
    contacts keep a hairline overlap instead of re-separating every substep,
    which suppresses the vertical ringing a full correction would feed.

    With `anchor` set, that body is held immovable and the other takes the
    whole correction (shock propagation: support chains rooted at static
    bodies resolve in a single ground-up sweep instead of trading penetration
    with their neighbors)."""
    depth = current_depth(c) - slop
    if depth <= 0.0:
        return None
    n = c.normal
    w_a = 0.0 if anchor == "a" else \
        generalized_inverse_mass_positional(c.body_a, c.r_a_local, n)
    w_b = 0.0 if anchor == "b" else \
        generalized_inverse_mass_positional(c.body_b, c.r_b_local, n)
    denom = w_a + w_b
    if denom == 0.0:
        return None
    lam = depth / denom
    # dx = -lam * w * grad with grad = -n: body_a separates along +n.
    p = (n[0] * lam, n[1] * lam, n[2] * lam)
    if anchor != "a":
        apply_positional_correction(c.body_a, c.r_a_local, p)
    if anchor != "b":
        apply_positional_correction(c.body_b, c.r_b_local, (-p[0], -p[1], -p[2]))
    c.lambda_normal += lam
    return lam


def solve_contact_static_friction(c: Contact, h: float,
                                  combine_rule: str = "geometric",
                                  anchor: Optional[str] = None) -> Optional[float]:
    """Cancel tangential contact-point slip accumulated since substep start,
    unless the required multiplier exceeds the static friction bound; in that
    case the contact is left marked for dynamic friction."""
    n = c.normal
    a, b = c.body_a, c.body_b
    pa = _advect(a.position, a.orientation, c.r_a_local)
    pb = _advect(b.position, b.orientation, c.r_b_local)
    pa_prev = _advect(a.prev_position, a.prev_orientation, c.r_a_local)
    pb_prev = _advect(b.prev_position, b.prev_orientation, c.r_b_local)
    dp = (pa[0] - pa_prev[0] - pb[0] + pb_prev[0],
          pa[1] - pa_prev[1] - pb[1] + pb_prev[1],
          pa[2] - pa_prev[2] - pb[2] + pb_prev[2])
    dpn = dp[0] * n[0] + dp[1] * n[1] + dp[2] * n[2]
    dp_t = (dp[0] - dpn * n[0], dp[1] - dpn * n[1], dp[2] - dpn * n[2])
    slip = math.sqrt(dp_t[0] ** 2 + dp_t[1] ** 2 + dp_t[2] ** 2)
    if slip < SLIP_EPS:
        c.static_friction_applied = True  # zero multiplier always satisfies the bound
        return None
    tangent = vscale(dp_t, 1.0 / slip)
    w_a = 0.0 if anchor == "a" else \
        generalized_inverse_mass_positional(c.body_a, c.r_a_local, tangent)
    w_b = 0.0 if anchor == "b" else \
        generalized_inverse_mass_positional(c.body_b, c.r_b_local, tangent)
    denom = w_a + w_b
    if denom == 0.0:
        return None
    lam = slip / denom
    mu_s = combine_friction(c.body_a.material.static_friction,
                            c.body_b.material.static_friction, combine_rule)
    if lam > mu_s * c.lambda_normal:
        c.static_friction_applied = False
        return None
    p = vscale(tangent, lam)
    if anchor != "a":
        apply_positional_correction(c.body_a, c.r_a_local, (-p[0], -p[1], -p[2]))
    if anchor != "b":
        apply_positional_correction(c.body_b, c.r_b_local, p)
    c.lambda_tangent += lam
    c.static_friction_applied = True
    return lam


def _apply_velocity_impulse(body: RigidBody, r_local: Vec3, p: Vec3, sign: float) -> None:
    if body.inverse_mass == 0.0:
        return
    w = body.inverse_mass * sign
    vx, vy, vz = body.velocity
    body.velocity = (vx + p[0] * w, vy + p[1] * w, vz + p[2] * w)
    r_world = rotate(body.orientation, r_local)
    torque_local = rotate_inv(body.orientation, vcross(r_world, p))
    dw = mat_vec(body.inverse_inertia_body, torque_local)
    wx, wy, wz = body.angular_velocity_local
    body.angular_velocity_local = (wx + dw[0] * sign, wy + dw[1] * sign, wz + dw[2] * sign)


def _point_velocity(body, r_local: Vec3) -> Vec3:
    # v + (q w_local q^-1) x (q r_local q^-1), inlined.
    qw, qx, qy, qz = body.orientation
    wx, wy, wz = body.angular_velocity_local
    tx = 2.0 * (qy * wz - qz * wy)
    ty = 2.0 * (qz * wx - qx * wz)
    tz = 2.0 * (qx * wy - qy * wx)
    ox = wx + qw * tx + qy * tz - qz * ty
    oy = wy + qw * ty + qz * tx - qx * tz
    oz = wz + qw * tz + qx * ty - qy * tx
    rx, ry, rz = r_local
    tx = 2.0 * (qy * rz - qz * ry)
    ty = 2.0 * (qz * rx - qx * rz)
    tz = 2.0 * (qx * ry - qy * rx)
    sx = rx + qw * tx + qy * tz - qz * ty
    sy = ry + qw * ty + qz * tx - qx * tz
    sz = rz + qw * tz + qx * ty - qy * tx
    v = body.velocity
    return (v[0] + oy * sz - oz * sy,
            v[1] + oz * sx - ox * sz,
            v[2] + ox * sy - oy * sx)


def relative_normal_speed(c: Contact) -> float:
    """Relative speed of the contact points along the normal (< 0 approaching)."""
    va = _point_velocity(c.body_a, c.r_a_local)
    vb = _point_velocity(c.body_b, c.r_b_local)
    n = c.normal
    return (va[0] - vb[0]) * n[0] + (va[1] - vb[1]) * n[1] + (va[2] - vb[2]) * n[2]


def velocity_solve_restitution(c: Contact, h: float, cutoff: float = 0.0,
                               presolve_normal_speed: Optional[float] = None,
                               anchor: Optional[str] = None) -> None:
    """Replace the current normal speed with the reflected pre-solve speed.

    The pre-solve approach speed is recovered per contact as
    v_n - lambda_normal * (W_a + W_b) / h: the current speed minus exactly
    what this substep's positional correction injected through the velocity
    recomputation.  Callers may pass an explicit value instead.  Below the
    jitter cutoff the restitution is treated as zero, which makes resting
    contacts settle instead of vibrating.

    A solve may reduce the separation speed by at most the injected amount,
    so genuine separation velocity is never stolen while injected jitter is
    removed precisely.

    With `anchor` set to "a" or "b", that body is treated as infinitely heavy
    and takes no recoil (shock propagation along support chains rooted at
    static bodies).  Callers only anchor against bodies that are themselves
    at rest along the normal, so a moving body still pays momentum for
    pushing its load.
    """
    n = c.normal
    va = _point_velocity(c.body_a, c.r_a_local)
    vb = _point_velocity(c.body_b, c.r_b_local)
    v_n = (va[0] - vb[0]) * n[0] + (va[1] - vb[1]) * n[1] + (va[2] - vb[2]) * n[2]
    depth_now = current_depth(c)
    if depth_now <= 0.0:
        # Not touching: contacts cannot pull, and an approach is only stopped
        # once it could actually reach the surface within this substep.
        if v_n >= 0.0 or -depth_now > -v_n * h:
            return
    w_a = 0.0 if anchor == "a" else \
        generalized_inverse_mass_positional(c.body_a, c.r_a_local, n)
    w_b = 0.0 if anchor == "b" else \
        generalized_inverse_mass_positional(c.body_b, c.r_b_local, n)
    denom = w_a + w_b
    if denom == 0.0:
        return
    injected = max(c.lambda_normal, 0.0) * denom / h
    if presolve_normal_speed is None:
        incoming = v_n - injected
    else:
        incoming = presolve_normal_speed
    e = c.body_a.material.restitution * c.body_b.material.restitution
    if abs(incoming) <= cutoff:
        e = 0.0
    target = max(-e * incoming, 0.0)
    dv = -v_n + target
    if dv == 0.0:
        return
    if dv < 0.0 and e > 0.0:
        # Protect genuine rebound velocity: an elastic contact may only be
        # slowed down by as much as the positional solve injected.  Inelastic
        # contacts absorb fully; that is what zero restitution means.
        dv = max(dv, -injected)
        if dv == 0.0:
            return
    p = vscale(n, dv / denom)
    if anchor != "a":
        _apply_velocity_impulse(c.body_a, c.r_a_local, p, 1.0)
    if anchor != "b":
        _apply_velocity_impulse(c.body_b, c.r_b_local, p, -1.0)


def velocity_solve_dynamic_friction(c: Contact, h: float,
                                    combine_rule: str = "geometric") -> None:
    """Remove tangential relative speed, capped at mu_d |lambda_normal| / h."""
    if c.static_friction_applied:
        return
    mu_d = combine_friction(c.body_a.material.dynamic_friction,
                            c.body_b.material.dynamic_friction, combine_rule)
    if mu_d == 0.0:
        return
    n = c.normal
    va = _point_velocity(c.body_a, c.r_a_local)
    vb = _point_velocity(c.body_b, c.r_b_local)
    v_rel = vsub(va, vb)
    v_t = vsub(v_rel, vscale(n, vdot(v_rel, n)))
    speed = vnorm(v_t)
    if speed < SPEED_EPS:
        return
    reduction = min(mu_d * abs(c.lambda_normal) / h, speed)
    tangent = vscale(v_t, 1.0 / speed)
    w_a = generalized_inverse_mass_positional(c.body_a, c.r_a_local, tangent)
    w_b = generalized_inverse_mass_positional(c.body_b, c.r_b_local, tangent)
    denom = w_a + w_b
    if denom == 0.0:
        return
    p = vscale(tangent, -reduction / denom)
    _apply_velocity_impulse(c.body_a, c.r_a_local, p, 1.0)
    _apply_velocity_impulse(c.body_b, c.r_b_local, p, -1.0)
