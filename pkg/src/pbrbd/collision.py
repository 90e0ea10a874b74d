"""Collider shapes, broad-phase pair pruning and narrow-phase contact generation.

Supported collider pairs: sphere/sphere, sphere/halfspace, sphere/box,
sphere/capsule, box/halfspace, box/box, capsule/halfspace, capsule/capsule
and capsule/box.  Box/box and box/halfspace produce a clipped face manifold
of up to four points; everything else produces point contacts.

Contact normals point from the second collider toward the first, i.e. along
the direction that separates the first body.  Contacts are generated down to
a small negative depth (the slop) so resting contacts persist between
substeps; only positive depth is ever corrected.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, List, Optional, Sequence, Tuple

from .vecmath import (
    Vec3,
    qconj,
    qmul,
    qto_matrix,
    rotate,
    rotate_inv,
    vadd,
    vcross,
    vdot,
    vnorm,
    vnormalize,
    vscale,
    vsub,
)

if TYPE_CHECKING:
    from .bodies import RigidBody

DEFAULT_SLOP = 1e-4
BROAD_MARGIN = 0.05
FACE_BAND = 0.02  # manifold retention band for near-parallel face contacts


class UnsupportedPairError(ValueError):
    """Raised for collider combinations the narrow phase does not handle."""


@dataclass(frozen=True)
class Sphere:
    radius: float

    def __post_init__(self):
        if self.radius <= 0.0:
            raise ValueError(f"sphere radius must be positive, got {self.radius}")


@dataclass(frozen=True)
class Box:
    half_extents: Vec3

    def __post_init__(self):
        if min(self.half_extents) <= 0.0:
            raise ValueError(f"box half extents must be positive, got {self.half_extents}")


@dataclass(frozen=True)
class Capsule:
    """Capsule along the local y axis: cylinder of 2*half_length plus end caps."""
    half_length: float
    radius: float

    def __post_init__(self):
        if self.half_length <= 0.0 or self.radius <= 0.0:
            raise ValueError(f"capsule dimensions must be positive, got {self}")


@dataclass(frozen=True)
class HalfSpace:
    """Solid region normal . x <= offset; the surface is the bounding plane."""
    normal: Vec3
    offset: float = 0.0

    def __post_init__(self):
        n = vnorm(self.normal)
        if not (abs(n - 1.0) < 1e-9):
            raise ValueError(f"half-space normal must be unit length, got {self.normal}")


ColliderShape = (Sphere, Box, Capsule, HalfSpace)


@dataclass
class Contact:
    """One contact point between two colliders.

    r_a_local / r_b_local are the offsets from each body's center of mass to
    the collision point, in body coordinates; advecting them with the current
    poses lets the solver recompute the depth without re-running the narrow
    phase.
    """
    body_a: "RigidBody"
    body_b: "RigidBody"
    point: Vec3
    depth: float
    normal: Vec3  # unit, points from body_b toward body_a
    r_a_local: Vec3 = (0.0, 0.0, 0.0)
    r_b_local: Vec3 = (0.0, 0.0, 0.0)
    lambda_normal: float = 0.0
    lambda_tangent: float = 0.0
    static_friction_applied: bool = False

    def reset_lambdas(self) -> None:
        self.lambda_normal = 0.0
        self.lambda_tangent = 0.0


@dataclass(frozen=True)
class CandidatePair:
    """Unordered collider pair emitted by the broad phase (index_a < index_b)."""
    index_a: int
    index_b: int


# --------------------------------------------------------------------------
# bounding boxes / broad phase
# --------------------------------------------------------------------------

def shape_aabb(shape, position: Vec3, orientation) -> Tuple[Vec3, Vec3]:
    """World axis-aligned bounding box of a collider at the given pose."""
    if isinstance(shape, Sphere):
        r = shape.radius
        return (
            (position[0] - r, position[1] - r, position[2] - r),
            (position[0] + r, position[1] + r, position[2] + r),
        )
    if isinstance(shape, Box):
        m = qto_matrix(orientation)
        hx, hy, hz = shape.half_extents
        ex = abs(m[0][0]) * hx + abs(m[0][1]) * hy + abs(m[0][2]) * hz
        ey = abs(m[1][0]) * hx + abs(m[1][1]) * hy + abs(m[1][2]) * hz
        ez = abs(m[2][0]) * hx + abs(m[2][1]) * hy + abs(m[2][2]) * hz
        return (
            (position[0] - ex, position[1] - ey, position[2] - ez),
            (position[0] + ex, position[1] + ey, position[2] + ez),
        )
    if isinstance(shape, Capsule):
        tip = rotate(orientation, (0.0, shape.half_length, 0.0))
        r = shape.radius
        lo = (
            position[0] - abs(tip[0]) - r,
            position[1] - abs(tip[1]) - r,
            position[2] - abs(tip[2]) - r,
        )
        hi = (
            position[0] + abs(tip[0]) + r,
            position[1] + abs(tip[1]) + r,
            position[2] + abs(tip[2]) + r,
        )
        return lo, hi
    if isinstance(shape, HalfSpace):
        inf = math.inf
        return (-inf, -inf, -inf), (inf, inf, inf)
    raise UnsupportedPairError(f"unknown collider shape {shape!r}")


def body_aabb(body, margin: float = 0.0) -> Tuple[Vec3, Vec3]:
    lo, hi = shape_aabb(body.collider, body.position, body.orientation)
    if margin:
        lo = (lo[0] - margin, lo[1] - margin, lo[2] - margin)
        hi = (hi[0] + margin, hi[1] + margin, hi[2] + margin)
    return lo, hi


def shape_bounding_radius(shape) -> float:
    """Radius of the bounding sphere around the shape's center of mass."""
    if isinstance(shape, Sphere):
        return shape.radius
    if isinstance(shape, Box):
        return vnorm(shape.half_extents)
    if isinstance(shape, Capsule):
        return shape.half_length + shape.radius
    return 0.0


def sweep_speed(body) -> float:
    """Upper bound on how fast any surface point of the body moves."""
    speed = vnorm(body.velocity)
    if body.collider is not None and body.angular_velocity_local != (0.0, 0.0, 0.0):
        speed += vnorm(body.angular_velocity_local) * shape_bounding_radius(body.collider)
    return speed


def _aabb_overlap(a, b) -> bool:
    return (
        a[0][0] <= b[1][0] and b[0][0] <= a[1][0]
        and a[0][1] <= b[1][1] and b[0][1] <= a[1][1]
        and a[0][2] <= b[1][2] and b[0][2] <= a[1][2]
    )


def broad_phase(scene) -> List[CandidatePair]:
    """Sweep-and-prune over velocity-expanded AABBs, run once per step.

    The boxes are inflated by |v| * frame_dt plus a fixed margin so that every
    pair that can touch during the coming step's substeps is included.
    Half-spaces have unbounded boxes and are paired directly.  Static-static
    pairs and explicitly filtered pairs are never emitted.
    """
    dt = scene.config.frame_dt
    filtered = scene.collision_filter
    entries = []  # (body index, aabb)
    planes = []
    for body in scene.bodies:
        if body.collider is None:
            continue
        if isinstance(body.collider, HalfSpace):
            planes.append(body.index)
            continue
        margin = BROAD_MARGIN + sweep_speed(body) * dt
        entries.append((body.index, body_aabb(body, margin)))

    pairs = []
    bodies = scene.bodies

    def emit(i: int, j: int) -> None:
        if i > j:
            i, j = j, i
        if (i, j) in filtered:
            return
        if bodies[i].is_static and bodies[j].is_static:
            return
        pairs.append((i, j))

    if len(entries) > 1:
        # Sweep along the axis with the greatest spread of box centers.
        n = float(len(entries))
        means = [0.0, 0.0, 0.0]
        for _, (lo, hi) in entries:
            for k in range(3):
                means[k] += 0.5 * (lo[k] + hi[k])
        means = [m / n for m in means]
        variances = [0.0, 0.0, 0.0]
        for _, (lo, hi) in entries:
            for k in range(3):
                d = 0.5 * (lo[k] + hi[k]) - means[k]
                variances[k] += d * d
        axis = max(range(3), key=lambda k: (variances[k], -k))

        order = sorted(entries, key=lambda e: (e[1][0][axis], e[0]))
        active: List[Tuple[int, Tuple[Vec3, Vec3]]] = []
        for idx, aabb in order:
            lo_val = aabb[0][axis]
            active = [e for e in active if e[1][1][axis] >= lo_val]
            for other_idx, other_aabb in active:
                if _aabb_overlap(aabb, other_aabb):
                    emit(idx, other_idx)
            active.append((idx, aabb))

    for plane_idx in planes:
        plane = bodies[plane_idx].collider
        for idx, aabb in entries:
            # Lowest corner of the box along the plane normal.
            lo, hi = aabb
            reach = (
                plane.normal[0] * (lo[0] if plane.normal[0] > 0 else hi[0])
                + plane.normal[1] * (lo[1] if plane.normal[1] > 0 else hi[1])
                + plane.normal[2] * (lo[2] if plane.normal[2] > 0 else hi[2])
            )
            if reach <= plane.offset:
                emit(plane_idx, idx)

    pairs.sort()
    return [CandidatePair(i, j) for (i, j) in pairs]


# --------------------------------------------------------------------------
# narrow phase
# --------------------------------------------------------------------------

def narrow_phase(body_a, body_b, slop: float = DEFAULT_SLOP) -> List[Contact]:
    """Exact contact generation for one collider pair.

    Correctness does not depend on broad-phase pruning; any supported pair may
    be passed.  Raises UnsupportedPairError for unsupported combinations.
    """
    sa, sb = body_a.collider, body_b.collider
    if sa is None or sb is None:
        raise UnsupportedPairError("both bodies need colliders")

    raw = _dispatch(body_a, body_b, sa, sb, slop)
    contacts = []
    for point, depth, normal in raw:
        if depth <= -slop:
            continue
        contacts.append(Contact(
            body_a=body_a,
            body_b=body_b,
            point=point,
            depth=depth,
            normal=normal,
            r_a_local=rotate_inv(body_a.orientation, vsub(point, body_a.position)),
            r_b_local=rotate_inv(body_b.orientation, vsub(point, body_b.position)),
        ))
    return contacts


_RawContact = Tuple[Vec3, float, Vec3]  # (point, depth, normal from b toward a)


def _dispatch(body_a, body_b, sa, sb, slop) -> List[_RawContact]:
    if isinstance(sa, Sphere):
        if isinstance(sb, Sphere):
            return _sphere_sphere(body_a.position, sa.radius, body_b.position, sb.radius)
        if isinstance(sb, HalfSpace):
            return _sphere_halfspace(body_a.position, sa.radius, sb)
        if isinstance(sb, Box):
            return _sphere_box(body_a.position, sa.radius, body_b)
        if isinstance(sb, Capsule):
            return _sphere_capsule(body_a.position, sa.radius, body_b)
    elif isinstance(sa, Box):
        if isinstance(sb, HalfSpace):
            return _box_halfspace(body_a, sb, slop)
        if isinstance(sb, Box):
            return _box_box(body_a, body_b, slop)
        if isinstance(sb, (Sphere, Capsule)):
            return _flip(_dispatch(body_b, body_a, sb, sa, slop))
    elif isinstance(sa, Capsule):
        if isinstance(sb, HalfSpace):
            return _capsule_halfspace(body_a, sb)
        if isinstance(sb, Capsule):
            return _capsule_capsule(body_a, body_b)
        if isinstance(sb, Box):
            return _capsule_box(body_a, body_b)
        if isinstance(sb, Sphere):
            return _flip(_dispatch(body_b, body_a, sb, sa, slop))
    elif isinstance(sa, HalfSpace):
        if isinstance(sb, (Sphere, Box, Capsule)):
            return _flip(_dispatch(body_b, body_a, sb, sa, slop))
    raise UnsupportedPairError(f"unsupported collider pair {type(sa).__name__}/{type(sb).__name__}")


def _flip(raw: List[_RawContact]) -> List[_RawContact]:
    return [(p, d, (-n[0], -n[1], -n[2])) for (p, d, n) in raw]


def _sphere_sphere(ca: Vec3, ra: float, cb: Vec3, rb: float) -> List[_RawContact]:
    delta = vsub(ca, cb)
    dist = vnorm(delta)
    depth = ra + rb - dist
    if dist > 1e-12:
        n = vscale(delta, 1.0 / dist)
    else:
        n = (0.0, 1.0, 0.0)
    pa = vsub(ca, vscale(n, ra))
    pb = vadd(cb, vscale(n, rb))
    point = vscale(vadd(pa, pb), 0.5)
    return [(point, depth, n)]


def _sphere_halfspace(center: Vec3, radius: float, plane: HalfSpace) -> List[_RawContact]:
    signed = vdot(plane.normal, center) - plane.offset
    depth = radius - signed
    pa = vsub(center, vscale(plane.normal, radius))
    pb = vsub(pa, vscale(plane.normal, vdot(plane.normal, pa) - plane.offset))
    point = vscale(vadd(pa, pb), 0.5)
    return [(point, depth, plane.normal)]


def _sphere_box(center: Vec3, radius: float, box_body) -> List[_RawContact]:
    box: Box = box_body.collider
    local = rotate_inv(box_body.orientation, vsub(center, box_body.position))
    he = box.half_extents
    clamped = (
        min(max(local[0], -he[0]), he[0]),
        min(max(local[1], -he[1]), he[1]),
        min(max(local[2], -he[2]), he[2]),
    )
    if clamped != local:
        delta = vsub(local, clamped)
        dist = vnorm(delta)
        n_local = vscale(delta, 1.0 / dist)
        depth = radius - dist
        surf_local = clamped
    else:
        # Center inside the box: push out through the nearest face.
        gaps = [he[k] - abs(local[k]) for k in range(3)]
        k = min(range(3), key=lambda i: (gaps[i], i))
        sign = 1.0 if local[k] >= 0.0 else -1.0
        n_local = tuple(sign if i == k else 0.0 for i in range(3))
        depth = radius + gaps[k]
        surf = list(local)
        surf[k] = sign * he[k]
        surf_local = (surf[0], surf[1], surf[2])
    n = rotate(box_body.orientation, n_local)
    pb = vadd(box_body.position, rotate(box_body.orientation, surf_local))
    pa = vsub(center, vscale(n, radius))
    point = vscale(vadd(pa, pb), 0.5)
    return [(point, depth, n)]


def _capsule_segment(body) -> Tuple[Vec3, Vec3]:
    cap: Capsule = body.collider
    tip = rotate(body.orientation, (0.0, cap.half_length, 0.0))
    return vadd(body.position, tip), vsub(body.position, tip)


def _sphere_capsule(center: Vec3, radius: float, cap_body) -> List[_RawContact]:
    e1, e2 = _capsule_segment(cap_body)
    closest = _closest_point_on_segment(center, e1, e2)
    return _sphere_sphere(center, radius, closest, cap_body.collider.radius)


def _closest_point_on_segment(p: Vec3, a: Vec3, b: Vec3) -> Vec3:
    ab = vsub(b, a)
    denom = vdot(ab, ab)
    if denom < 1e-18:
        return a
    t = vdot(vsub(p, a), ab) / denom
    t = min(max(t, 0.0), 1.0)
    return vadd(a, vscale(ab, t))


def _box_corners(body) -> List[Vec3]:
    he = body.collider.half_extents
    q = body.orientation
    pos = body.position
    corners = []
    for sx in (-1.0, 1.0):
        for sy in (-1.0, 1.0):
            for sz in (-1.0, 1.0):
                corners.append(vadd(pos, rotate(q, (sx * he[0], sy * he[1], sz * he[2]))))
    return corners


def _box_halfspace(body, plane: HalfSpace, slop: float) -> List[_RawContact]:
    axes = _mat_columns(qto_matrix(body.orientation))
    if max(abs(vdot(axis, plane.normal)) for axis in axes) > 0.98:
        slop = max(slop, FACE_BAND)  # near-flat resting: keep the full face
    found = []
    for idx, corner in enumerate(_box_corners(body)):
        signed = vdot(plane.normal, corner) - plane.offset
        depth = -signed
        if depth > -slop:
            pb = vsub(corner, vscale(plane.normal, signed))
            point = vscale(vadd(corner, pb), 0.5)
            found.append((depth, idx, point))
    found.sort(key=lambda e: (-e[0], e[1]))
    found = found[:4]
    return [(point, depth, plane.normal)
            for depth, _, point in _diagonal_pairs(found)]


def _capsule_halfspace(body, plane: HalfSpace) -> List[_RawContact]:
    r = body.collider.radius
    raw = []
    for end in _capsule_segment(body):
        raw.extend(_sphere_halfspace(end, r, plane))
    return raw


def _capsule_capsule(body_a, body_b) -> List[_RawContact]:
    a1, a2 = _capsule_segment(body_a)
    b1, b2 = _capsule_segment(body_b)
    pa, pb = _closest_points_segments(a1, a2, b1, b2)
    return _sphere_sphere(pa, body_a.collider.radius, pb, body_b.collider.radius)


def _closest_points_segments(p1: Vec3, q1: Vec3, p2: Vec3, q2: Vec3) -> Tuple[Vec3, Vec3]:
    """Closest points between segments p1q1 and p2q2 (clamped, degenerate-safe)."""
    d1 = vsub(q1, p1)
    d2 = vsub(q2, p2)
    r = vsub(p1, p2)
    a = vdot(d1, d1)
    e = vdot(d2, d2)
    f = vdot(d2, r)
    eps = 1e-14
    if a <= eps and e <= eps:
        return p1, p2
    if a <= eps:
        s = 0.0
        t = min(max(f / e, 0.0), 1.0)
    else:
        c = vdot(d1, r)
        if e <= eps:
            t = 0.0
            s = min(max(-c / a, 0.0), 1.0)
        else:
            b = vdot(d1, d2)
            denom = a * e - b * b
            if denom > eps:
                s = min(max((b * f - c * e) / denom, 0.0), 1.0)
            else:
                s = 0.0
            t = (b * s + f) / e
            if t < 0.0:
                t = 0.0
                s = min(max(-c / a, 0.0), 1.0)
            elif t > 1.0:
                t = 1.0
                s = min(max((b - c) / a, 0.0), 1.0)
    return vadd(p1, vscale(d1, s)), vadd(p2, vscale(d2, t))


def _point_aabb_distance(p: Vec3, he: Vec3) -> float:
    dx = max(abs(p[0]) - he[0], 0.0)
    dy = max(abs(p[1]) - he[1], 0.0)
    dz = max(abs(p[2]) - he[2], 0.0)
    return math.sqrt(dx * dx + dy * dy + dz * dz)


def _capsule_box(cap_body, box_body) -> List[_RawContact]:
    """Swept-segment SAT in the box frame: face normals, edge/axis cross
    products and (when the segment clears the box) the closest-point
    direction.  The smallest positive penetration realizes the minimum
    translation, so separating along the returned normal is always sound."""
    box: Box = box_body.collider
    cap: Capsule = cap_body.collider
    r = cap.radius
    e1, e2 = _capsule_segment(cap_body)
    l1 = rotate_inv(box_body.orientation, vsub(e1, box_body.position))
    l2 = rotate_inv(box_body.orientation, vsub(e2, box_body.position))
    he = box.half_extents

    # Ternary search for the closest segment point (convex in t; flat inside).
    lo, hi = 0.0, 1.0
    for _ in range(48):
        m1 = lo + (hi - lo) / 3.0
        m2 = hi - (hi - lo) / 3.0
        if _point_aabb_distance(_lerp3(l1, l2, m1), he) <= \
           _point_aabb_distance(_lerp3(l1, l2, m2), he):
            hi = m2
        else:
            lo = m1
    t_close = min((0.0, 0.5 * (lo + hi), 1.0),
                  key=lambda tc: (_point_aabb_distance(_lerp3(l1, l2, tc), he), tc))
    p_close = _lerp3(l1, l2, t_close)
    clamped = (
        min(max(p_close[0], -he[0]), he[0]),
        min(max(p_close[1], -he[1]), he[1]),
        min(max(p_close[2], -he[2]), he[2]),
    )
    closest_dist = vnorm(vsub(p_close, clamped))

    candidates: List[Vec3] = []
    if closest_dist > 1e-9:
        candidates.append(vscale(vsub(p_close, clamped), 1.0 / closest_dist))
    seg_dir = vnormalize(vsub(l2, l1))
    for k in range(3):
        axis = tuple(1.0 if i == k else 0.0 for i in range(3))
        candidates.append(axis)
        candidates.append(tuple(-x for x in axis))
        cr = vcross(axis, seg_dir)
        norm = vnorm(cr)
        if norm > 1e-9:
            cr = vscale(cr, 1.0 / norm)
            candidates.append(cr)
            candidates.append(tuple(-x for x in cr))

    best_pen = math.inf
    best_axis: Optional[Vec3] = None
    for axis in candidates:
        support = he[0] * abs(axis[0]) + he[1] * abs(axis[1]) + he[2] * abs(axis[2])
        pen = support + r - min(vdot(axis, l1), vdot(axis, l2))
        if pen < best_pen:
            best_pen, best_axis = pen, axis

    proj1, proj2 = vdot(best_axis, l1), vdot(best_axis, l2)
    if abs(proj1 - proj2) < 1e-9:
        deep_local = vscale(vadd(l1, l2), 0.5)  # lying flat: center of overlap
    else:
        deep_local = l1 if proj1 < proj2 else l2
    n = rotate(box_body.orientation, best_axis)
    deep_world = vadd(box_body.position, rotate(box_body.orientation, deep_local))
    pa = vsub(deep_world, vscale(n, r))
    point = vadd(pa, vscale(n, 0.5 * best_pen))
    return [(point, best_pen, n)]


def _lerp3(a: Vec3, b: Vec3, t: float) -> Vec3:
    return (a[0] + (b[0] - a[0]) * t, a[1] + (b[1] - a[1]) * t, a[2] + (b[2] - a[2]) * t)


# ---- box/box: SAT over 15 axes, reference face selection, incident clipping

def _mat_columns(m) -> Tuple[Vec3, Vec3, Vec3]:
    return (
        (m[0][0], m[1][0], m[2][0]),
        (m[0][1], m[1][1], m[2][1]),
        (m[0][2], m[1][2], m[2][2]),
    )


def _box_box(body_a, body_b, slop: float) -> List[_RawContact]:
    """SAT over the 15 candidate axes, evaluated in A's body frame; face axes
    are tested first so ties prefer a face manifold over an edge contact."""
    ha = body_a.collider.half_extents
    hb = body_b.collider.half_extents
    qa = body_a.orientation
    qb = body_b.orientation
    # R[i][j] = (A axis i) . (B axis j); column j is B's axis j in A's frame.
    rel = qmul(qconj(qa), qb)
    R = qto_matrix(rel)
    A = (abs(R[0][0]), abs(R[0][1]), abs(R[0][2]))
    B = (abs(R[1][0]), abs(R[1][1]), abs(R[1][2]))
    C = (abs(R[2][0]), abs(R[2][1]), abs(R[2][2]))
    AbsR = (A, B, C)
    t = rotate_inv(qa, vsub(body_b.position, body_a.position))  # a -> b, A frame

    best_index = -1
    best_overlap = math.inf
    # A's face axes.
    for i in range(3):
        rb = hb[0] * AbsR[i][0] + hb[1] * AbsR[i][1] + hb[2] * AbsR[i][2]
        overlap = ha[i] + rb - abs(t[i])
        if overlap <= -slop:
            return []
        if overlap < best_overlap:
            best_overlap, best_index = overlap, i
    # B's face axes.
    for j in range(3):
        ra = ha[0] * AbsR[0][j] + ha[1] * AbsR[1][j] + ha[2] * AbsR[2][j]
        dist = abs(t[0] * R[0][j] + t[1] * R[1][j] + t[2] * R[2][j])
        overlap = ra + hb[j] - dist
        if overlap <= -slop:
            return []
        if overlap < best_overlap:
            best_overlap, best_index = overlap, 3 + j
    # Edge-edge cross axes (normalized by the cross product length).
    for i in range(3):
        i1, i2 = (i + 1) % 3, (i + 2) % 3
        for j in range(3):
            j1, j2 = (j + 1) % 3, (j + 2) % 3
            length_sq = 1.0 - R[i][j] * R[i][j]
            if length_sq < 1e-12:
                continue
            length = math.sqrt(length_sq)
            ra = ha[i1] * AbsR[i2][j] + ha[i2] * AbsR[i1][j]
            rb = hb[j1] * AbsR[i][j2] + hb[j2] * AbsR[i][j1]
            dist = abs(t[i2] * R[i1][j] - t[i1] * R[i2][j])
            overlap = (ra + rb - dist) / length
            if overlap <= -slop:
                return []
            if overlap < best_overlap:
                best_overlap, best_index = overlap, 6 + i * 3 + j

    # Reconstruct the winning axis in world space.
    if best_index < 3:
        axis_local = tuple(1.0 if k == best_index else 0.0 for k in range(3))
        axis = rotate(qa, axis_local)
    elif best_index < 6:
        j = best_index - 3
        axis = rotate(qb, tuple(1.0 if k == j else 0.0 for k in range(3)))
    else:
        i, j = (best_index - 6) // 3, (best_index - 6) % 3
        e_b = (R[0][j], R[1][j], R[2][j])
        e_a = tuple(1.0 if k == i else 0.0 for k in range(3))
        axis = rotate(qa, vnormalize(vcross(e_a, e_b)))

    d = vsub(body_a.position, body_b.position)  # orient the normal b -> a
    axes_a = _mat_columns(qto_matrix(qa))
    axes_b = _mat_columns(qto_matrix(qb))
    n = axis if vdot(axis, d) >= 0.0 else vscale(axis, -1.0)

    if best_index < 6:
        if best_index < 3:
            ref_body, ref_axes, ref_he = body_a, axes_a, ha
            inc_body, inc_axes, inc_he = body_b, axes_b, hb
            ref_n = vscale(n, -1.0)  # A's face that looks toward B
        else:
            ref_body, ref_axes, ref_he = body_b, axes_b, hb
            inc_body, inc_axes, inc_he = body_a, axes_a, ha
            ref_n = n
        return _clip_face_manifold(
            ref_body, ref_axes, ref_he, ref_n,
            inc_body, inc_axes, inc_he,
            n, slop,
        )

    # Edge-edge contact: closest points between the two support edges.
    i = (best_index - 6) // 3
    j = (best_index - 6) % 3
    pa = body_a.position
    for m in range(3):
        if m == i:
            continue
        s = -1.0 if vdot(axes_a[m], n) > 0.0 else 1.0
        pa = vadd(pa, vscale(axes_a[m], s * ha[m]))
    pb = body_b.position
    for m in range(3):
        if m == j:
            continue
        s = 1.0 if vdot(axes_b[m], n) > 0.0 else -1.0
        pb = vadd(pb, vscale(axes_b[m], s * hb[m]))
    a1 = vsub(pa, vscale(axes_a[i], ha[i]))
    a2 = vadd(pa, vscale(axes_a[i], ha[i]))
    b1 = vsub(pb, vscale(axes_b[j], hb[j]))
    b2 = vadd(pb, vscale(axes_b[j], hb[j]))
    ca, cb = _closest_points_segments(a1, a2, b1, b2)
    point = vscale(vadd(ca, cb), 0.5)
    return [(point, best_overlap, n)]


def _clip_face_manifold(ref_body, ref_axes, ref_he, ref_n,
                        inc_body, inc_axes, inc_he, n, slop) -> List[_RawContact]:
    # Reference face: the face of ref_body whose outward normal is ref_n.
    k = max(range(3), key=lambda m: abs(vdot(ref_axes[m], ref_n)))
    s_k = 1.0 if vdot(ref_axes[k], ref_n) >= 0.0 else -1.0
    face_normal = vscale(ref_axes[k], s_k)
    face_center = vadd(ref_body.position, vscale(ref_axes[k], s_k * ref_he[k]))

    # Incident face: the face of inc_body most anti-parallel to the reference.
    j = max(range(3), key=lambda m: abs(vdot(inc_axes[m], face_normal)))
    s_j = -1.0 if vdot(inc_axes[j], face_normal) > 0.0 else 1.0
    # Nearly parallel faces keep their full manifold even when some corners
    # sit slightly apart; a thin 2-point manifold would leave an unresisted
    # hinge mode in resting stacks.
    if abs(vdot(inc_axes[j], face_normal)) > 0.98:
        slop = max(slop, FACE_BAND)
    inc_center = vadd(inc_body.position, vscale(inc_axes[j], s_j * inc_he[j]))
    ju, jv = [m for m in range(3) if m != j]
    u_inc = vscale(inc_axes[ju], inc_he[ju])
    v_inc = vscale(inc_axes[jv], inc_he[jv])
    poly = [
        vadd(vadd(inc_center, u_inc), v_inc),
        vsub(vadd(inc_center, u_inc), v_inc),
        vsub(vsub(inc_center, u_inc), v_inc),
        vadd(vsub(inc_center, u_inc), v_inc),
    ]

    # Clip against the four side planes of the reference face.
    ru, rv = [m for m in range(3) if m != k]
    for axis_idx in (ru, rv):
        axis = ref_axes[axis_idx]
        limit = ref_he[axis_idx]
        center_proj = vdot(ref_body.position, axis)
        poly = _clip_polygon(poly, axis, center_proj + limit)
        if not poly:
            return []
        poly = _clip_polygon(poly, vscale(axis, -1.0), -(center_proj - limit))
        if not poly:
            return []

    plane_offset = vdot(face_normal, face_center)
    found = []
    for idx, p in enumerate(poly):
        depth = plane_offset - vdot(face_normal, p)
        if depth > -slop:
            point = vadd(p, vscale(face_normal, 0.5 * depth))
            found.append((depth, idx, point))
    found.sort(key=lambda e: (-e[0], e[1]))
    found = found[:4]
    return [(point, depth, n) for depth, _, point in _diagonal_pairs(found)]


def _diagonal_pairs(found):
    """Order a 4-point manifold so diagonally opposite corners are solved
    back to back: their torques cancel pairwise instead of accumulating a
    tilt over the sweep."""
    if len(found) != 4:
        return found
    first = found[0]
    rest = found[1:]
    far = max(range(3), key=lambda k: (
        (rest[k][2][0] - first[2][0]) ** 2
        + (rest[k][2][1] - first[2][1]) ** 2
        + (rest[k][2][2] - first[2][2]) ** 2))
    others = [rest[k] for k in range(3) if k != far]
    return [first, rest[far], others[0], others[1]]


def _clip_polygon(poly: Sequence[Vec3], direction: Vec3, limit: float) -> List[Vec3]:
    """Keep the part of the polygon with point . direction <= limit."""
    result: List[Vec3] = []
    count = len(poly)
    for i in range(count):
        cur = poly[i]
        nxt = poly[(i + 1) % count]
        d_cur = vdot(cur, direction) - limit
        d_nxt = vdot(nxt, direction) - limit
        if d_cur <= 0.0:
            result.append(cur)
            if d_nxt > 0.0:
                t = d_cur / (d_cur - d_nxt)
                result.append(_lerp3(cur, nxt, t))
        elif d_nxt <= 0.0:
            t = d_cur / (d_cur - d_nxt)
            result.append(_lerp3(cur, nxt, t))
    return result
