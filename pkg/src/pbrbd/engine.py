"""The simulation loop: substepping, integration, constraint solve scheduling,
velocity recomputation and the velocity solve.

Each frame runs the broad phase once, then for every substep: integrate,
solve constraints and contact positions (Gauss-Seidel or Jacobi), recompute
velocities from the position change, run the narrow phase, and finish with
the restitution / dynamic friction velocity pass.  Contacts discovered by a
substep's narrow phase are position-corrected in the next substep; their
accumulated normal multipliers and friction flags are carried across the
refresh by matching contact points pair-wise.

With parallelism off the engine is strictly deterministic: identical scenes
and configs produce bit-identical trajectories.  With parallelism on, work is
split into body-disjoint batches (greedy graph coloring) whose results are
reduced in a fixed order, so parallel runs reproduce the serial schedule
exactly.
"""
from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Set, Tuple

from . import collision
from .bodies import Particle, RigidBody
from .constraints import constraint_endpoints, solve_constraint
from .contacts import (
    _point_velocity as _anchor_point_velocity,
    relative_normal_speed,
    solve_contact_position,
    solve_contact_static_friction,
    velocity_solve_dynamic_friction,
    velocity_solve_restitution,
)
from .metrics import energy
from .vecmath import (
    Vec3,
    ZERO3,
    integrate_orientation,
    mat_vec,
    qconj,
    qmul,
    qnormalize,
    rotate,
    rotate_inv,
    vadd,
    vcross,
    vdot,
    vnorm,
    vscale,
    vsub,
)

GAUSS_SEIDEL = "gs"
JACOBI = "jacobi"


@dataclass
class SolverConfig:
    frame_dt: float = 1.0 / 60.0
    num_substeps: int = 20
    iterations_per_substep: int = 1
    solver_mode: str = GAUSS_SEIDEL
    jacobi_relaxation: float = 1.0  # 1 = plain average of the corrections
    parallel: bool = False
    gravity: Vec3 = (0.0, -9.81, 0.0)
    slop: float = collision.DEFAULT_SLOP
    restitution_cutoff: Optional[float] = None  # m/s; None = 2 |g| h
    divergence_energy_factor: float = 10.0
    friction_combine: str = "geometric"

    def __post_init__(self):
        if self.frame_dt <= 0.0:
            raise ValueError("frame_dt must be positive")
        if self.num_substeps < 1 or self.iterations_per_substep < 1:
            raise ValueError("substep and iteration counts must be at least 1")
        if self.solver_mode not in (GAUSS_SEIDEL, JACOBI):
            raise ValueError(f"unknown solver mode {self.solver_mode!r}")
        if not 0.0 < self.jacobi_relaxation <= 1.0:
            raise ValueError("jacobi_relaxation must lie in (0, 1]")


@dataclass
class Scene:
    config: SolverConfig = field(default_factory=SolverConfig)
    bodies: List[RigidBody] = field(default_factory=list)
    particles: List[Particle] = field(default_factory=list)
    constraints: List[object] = field(default_factory=list)
    contacts: List[collision.Contact] = field(default_factory=list)
    collision_filter: Set[Tuple[int, int]] = field(default_factory=set)
    manifold_cache: Dict = field(default_factory=dict)
    time: float = 0.0
    frame_index: int = 0
    initial_energy: Optional[float] = None
    diverged: bool = False
    tracked_body_index: Optional[int] = None
    tracked_initial_position: Optional[Vec3] = None

    def add_body(self, body: RigidBody) -> RigidBody:
        body.index = len(self.bodies)
        self.bodies.append(body)
        return body

    def add_particle(self, particle: Particle) -> Particle:
        self.particles.append(particle)
        return particle

    def add_constraint(self, c, collide_connected: bool = False) -> object:
        self.constraints.append(c)
        if not collide_connected:
            # Jointed body pairs do not collide with each other by default.
            ends = [e for e in constraint_endpoints(c) if isinstance(e, RigidBody)]
            for i in range(len(ends)):
                for j in range(i + 1, len(ends)):
                    self.exclude_collision(ends[i], ends[j])
        return c

    def exclude_collision(self, body_a: RigidBody, body_b: RigidBody) -> None:
        i, j = body_a.index, body_b.index
        if i >= 0 and j >= 0 and i != j:
            self.collision_filter.add((min(i, j), max(i, j)))

    def track(self, body: RigidBody) -> None:
        self.tracked_body_index = body.index
        self.tracked_initial_position = body.position


@dataclass
class StepReport:
    substep_ms: List[float]
    diverged: bool
    total_energy: float


def positional_update(scene: Scene, h: float) -> None:
    """Semi-implicit Euler step for every dynamic body and particle; saves the
    previous poses and captures the pre-solve velocities."""
    gx, gy, gz = scene.config.gravity
    for p in scene.particles:
        p.prev_position = p.position
        w = p.inverse_mass
        if w == 0.0:
            continue
        vx, vy, vz = p.velocity
        fx, fy, fz = p.external_force
        vx += h * (gx + fx * w)
        vy += h * (gy + fy * w)
        vz += h * (gz + fz * w)
        p.velocity = (vx, vy, vz)
        x, y, z = p.position
        p.position = (x + h * vx, y + h * vy, z + h * vz)
    for b in scene.bodies:
        b.prev_position = b.position
        b.prev_orientation = b.orientation
        if b.inverse_mass == 0.0:
            continue
        w = b.inverse_mass
        vx, vy, vz = b.velocity
        fx, fy, fz = b.external_force
        vx += h * (gx + fx * w)
        vy += h * (gy + fy * w)
        vz += h * (gz + fz * w)
        b.velocity = (vx, vy, vz)
        x, y, z = b.position
        b.position = (x + h * vx, y + h * vy, z + h * vz)
        # w += h I^-1 (T - w x (I w)), all in the body frame.
        wl = b.angular_velocity_local
        gyro = vcross(wl, mat_vec(b.inertia_body, wl))
        torque = vsub(b.external_torque_local, gyro)
        dw = mat_vec(b.inverse_inertia_body, torque)
        wl = (wl[0] + h * dw[0], wl[1] + h * dw[1], wl[2] + h * dw[2])
        b.angular_velocity_local = wl
        b.orientation = integrate_orientation(b.orientation, rotate(b.orientation, wl), h)


def velocity_update(scene: Scene, h: float) -> None:
    """Recompute velocities from the position change over the substep."""
    inv_h = 1.0 / h
    for p in scene.particles:
        if p.inverse_mass == 0.0:
            continue
        p.velocity = vscale(vsub(p.position, p.prev_position), inv_h)
    for b in scene.bodies:
        if b.inverse_mass == 0.0:
            continue
        b.velocity = vscale(vsub(b.position, b.prev_position), inv_h)
        dq = qmul(b.orientation, qconj(b.prev_orientation))
        scale = 2.0 * inv_h if dq[0] >= 0.0 else -2.0 * inv_h
        w_world = (dq[1] * scale, dq[2] * scale, dq[3] * scale)
        b.angular_velocity_local = rotate_inv(b.orientation, w_world)


# --------------------------------------------------------------------------
# solve scheduling
# --------------------------------------------------------------------------

_EXECUTOR: Optional[ThreadPoolExecutor] = None


def _executor() -> ThreadPoolExecutor:
    global _EXECUTOR
    if _EXECUTOR is None:
        _EXECUTOR = ThreadPoolExecutor()
    return _EXECUTOR


def _item_endpoints(item) -> List[object]:
    if isinstance(item, collision.Contact):
        return [item.body_a, item.body_b]
    return constraint_endpoints(item)


def _dynamic_ids(item) -> List[int]:
    ids = []
    for e in _item_endpoints(item):
        if e is not None and not e.is_static:
            ids.append(id(e))
    return ids


def build_islands(constraints: Sequence, contacts: Sequence) -> List[List[object]]:
    """Partition work into batches in which no two items share a dynamic body
    (greedy graph coloring, deterministic for a given input order)."""
    items = list(constraints) + list(contacts)
    used_colors: Dict[int, Set[int]] = {}
    batches: List[List[object]] = []
    for item in items:
        ids = _dynamic_ids(item)
        taken = set()
        for body_id in ids:
            taken |= used_colors.get(body_id, set())
        color = 0
        while color in taken:
            color += 1
        if color == len(batches):
            batches.append([])
        batches[color].append(item)
        for body_id in ids:
            used_colors.setdefault(body_id, set()).add(color)
    return batches


def _solve_item(item, h: float, frame_index: int, substep_index: int,
                num_substeps: int, combine_rule: str, slop: float,
                anchors: Optional[Dict[int, Optional[str]]] = None) -> None:
    if isinstance(item, collision.Contact):
        anchor = anchors.get(id(item)) if anchors else None
        solve_contact_position(item, h, slop, anchor)
        solve_contact_static_friction(item, h, combine_rule, anchor)
    else:
        solve_constraint(item, h, frame_index, substep_index, num_substeps)


def _manifold_alternated(contacts: Sequence[collision.Contact]) -> List[collision.Contact]:
    """Contacts with each pair's manifold points reversed.  A fixed corner
    order applies a tiny but systematic torque bias to face manifolds that
    slowly walks tall stacks sideways; alternating it between substeps
    cancels the bias without disturbing the pair-level solve order."""
    result: List[collision.Contact] = []
    run: List[collision.Contact] = []
    run_key = None
    for ct in contacts:
        key = (ct.body_a.index, ct.body_b.index)
        if key != run_key and run:
            result.extend(reversed(run))
            run = []
        run_key = key
        run.append(ct)
    result.extend(reversed(run))
    return result


def _gauss_seidel_phase(scene: Scene, h: float, substep_index: int) -> None:
    # Symmetric sweeps: constraint order alternates direction and contact
    # manifolds alternate corner order between iterations, canceling the
    # first-order order bias of sequential solves.
    cfg = scene.config
    pool = _executor() if cfg.parallel else None
    for it in range(cfg.iterations_per_substep):
        reverse = (substep_index + it) % 2 == 1
        constraints = scene.constraints if not reverse else scene.constraints[::-1]
        contacts = scene.contacts if not reverse else _manifold_alternated(scene.contacts)
        if pool is None:
            for c in constraints:
                solve_constraint(c, h, scene.frame_index, substep_index, cfg.num_substeps)
            for ct in contacts:
                solve_contact_position(ct, h, cfg.slop)
                solve_contact_static_friction(ct, h, cfg.friction_combine)
            continue
        batches = build_islands(constraints, contacts)
        for batch in batches:
            # Items in one batch touch disjoint bodies, so concurrent solves
            # commute and reproduce the serial batch order exactly.
            list(pool.map(
                lambda item: _solve_item(item, h, scene.frame_index, substep_index,
                                         cfg.num_substeps, cfg.friction_combine,
                                         cfg.slop),
                batch))


def _capture_state(endpoints) -> List[Tuple[object, tuple]]:
    state = []
    for e in endpoints:
        if e is None:
            continue
        if isinstance(e, Particle):
            state.append((e, (e.position,)))
        else:
            state.append((e, (e.position, e.orientation)))
    return state


def _jacobi_eval(item, h, frame_index, substep_index, num_substeps, combine_rule, slop,
                 anchors=None):
    """Run one solve against the current (frozen) state and report the pose
    deltas it wanted to apply, restoring the state afterwards."""
    endpoints = _item_endpoints(item)
    saved = _capture_state(endpoints)
    _solve_item(item, h, frame_index, substep_index, num_substeps, combine_rule, slop,
                anchors)
    deltas = []
    for e, old in saved:
        if isinstance(e, Particle):
            if e.position != old[0]:
                deltas.append((e, vsub(e.position, old[0]), None))
            e.position = old[0]
        else:
            dpos = vsub(e.position, old[0])
            q_new, q_old = e.orientation, old[1]
            dq = (q_new[0] - q_old[0], q_new[1] - q_old[1],
                  q_new[2] - q_old[2], q_new[3] - q_old[3])
            if dpos != ZERO3 or dq != (0.0, 0.0, 0.0, 0.0):
                deltas.append((e, dpos, dq))
            e.position = old[0]
            e.orientation = old[1]
    return deltas


def _jacobi_phase(scene: Scene, h: float, substep_index: int) -> None:
    """Evaluate every constraint and contact against the substep-start state,
    then apply the per-body averaged corrections scaled by the relaxation."""
    cfg = scene.config
    items = list(scene.constraints) + list(scene.contacts)
    anchors = None
    for _ in range(cfg.iterations_per_substep):
        if cfg.parallel:
            all_deltas: List[list] = [None] * len(items)
            index_of = {id(item): k for k, item in enumerate(items)}
            pool = _executor()
            for batch in build_islands(items, ()):
                # Body-disjoint batches keep the evaluate-and-restore trick
                # race free; the reduction below runs in global item order.
                results = list(pool.map(
                    lambda item: (id(item), _jacobi_eval(
                        item, h, scene.frame_index, substep_index,
                        cfg.num_substeps, cfg.friction_combine, cfg.slop,
                        anchors)),
                    batch))
                for item_id, deltas in results:
                    all_deltas[index_of[item_id]] = deltas
        else:
            all_deltas = [
                _jacobi_eval(item, h, scene.frame_index, substep_index,
                             cfg.num_substeps, cfg.friction_combine, cfg.slop,
                             anchors)
                for item in items
            ]

        buffers: Dict[int, list] = {}
        for deltas in all_deltas:
            if not deltas:
                continue
            for e, dpos, dq in deltas:
                buf = buffers.get(id(e))
                if buf is None:
                    buffers[id(e)] = [e, dpos, dq, 1]
                else:
                    buf[1] = vadd(buf[1], dpos)
                    if dq is not None:
                        old = buf[2]
                        buf[2] = (old[0] + dq[0], old[1] + dq[1],
                                  old[2] + dq[2], old[3] + dq[3]) if old is not None else dq
                    buf[3] += 1
        relax = cfg.jacobi_relaxation
        for buf in buffers.values():
            e, dpos, dq, count = buf
            scale = relax / count
            e.position = vadd(e.position, vscale(dpos, scale))
            if dq is not None and not isinstance(e, Particle):
                q = e.orientation
                e.orientation = qnormalize((
                    q[0] + dq[0] * scale,
                    q[1] + dq[1] * scale,
                    q[2] + dq[2] * scale,
                    q[3] + dq[3] * scale,
                ))


# --------------------------------------------------------------------------
# narrow phase refresh and the velocity pass
# --------------------------------------------------------------------------

_MATCH_TOLERANCE = 0.3
_CACHE_POS_TOL = 1e-6
_CACHE_QUAT_TOL = 1e-7


def _close3(a, b) -> bool:
    return (abs(a[0] - b[0]) < _CACHE_POS_TOL and abs(a[1] - b[1]) < _CACHE_POS_TOL
            and abs(a[2] - b[2]) < _CACHE_POS_TOL)


def _close4(a, b) -> bool:
    return (abs(a[0] - b[0]) < _CACHE_QUAT_TOL and abs(a[1] - b[1]) < _CACHE_QUAT_TOL
            and abs(a[2] - b[2]) < _CACHE_QUAT_TOL and abs(a[3] - b[3]) < _CACHE_QUAT_TOL)


def _refresh_contacts(scene: Scene, pairs, h: float) -> List[collision.Contact]:
    """Run the narrow phase over the broad-phase pairs; carry each matched
    contact's accumulated multipliers and friction flag over to its successor
    so the velocity pass sees the state the positional solve produced.

    The generation margin is widened by the pair's closing distance per
    substep (speculative contacts): an approaching pair gets its velocity
    solved before it can penetrate, so impacts do not displace resting
    neighbors."""
    old_by_pair: Dict[Tuple[int, int], List[collision.Contact]] = {}
    for ct in scene.contacts:
        key = (ct.body_a.index, ct.body_b.index)
        old_by_pair.setdefault(key, []).append(ct)

    bodies = scene.bodies
    slop = scene.config.slop
    cache = scene.manifold_cache
    fresh: List[collision.Contact] = []
    for pair in pairs:
        body_a = bodies[pair.index_a]
        body_b = bodies[pair.index_b]
        pair_slop = slop + h * (collision.sweep_speed(body_a) + collision.sweep_speed(body_b))
        # Resting pairs keep an identical relative pose for long stretches;
        # reusing their manifold skips the repeated narrow-phase work.
        qa = body_a.orientation
        rel_q = qmul(qconj(qa), body_b.orientation)
        rel_p = rotate_inv(qa, vsub(body_b.position, body_a.position))
        key = (pair.index_a, pair.index_b)
        entry = cache.get(key)
        if entry is not None and abs(entry[2] - pair_slop) < 1e-6 and                 _close3(entry[0], rel_p) and _close4(entry[1], rel_q):
            found = [
                collision.Contact(
                    body_a=body_a, body_b=body_b,
                    point=body_a.world_point(r_a),
                    depth=depth,
                    normal=rotate(qa, n_local),
                    r_a_local=r_a, r_b_local=r_b,
                )
                for (r_a, r_b, depth, n_local) in entry[3]
            ]
        else:
            found = collision.narrow_phase(body_a, body_b, pair_slop)
            cache[key] = (rel_p, rel_q, pair_slop, tuple(
                (c.r_a_local, c.r_b_local, c.depth, rotate_inv(qa, c.normal))
                for c in found))
        if not found:
            continue
        previous = old_by_pair.get((pair.index_a, pair.index_b))
        if previous:
            unused = list(previous)
            for ct in found:
                best = None
                best_d2 = _MATCH_TOLERANCE * _MATCH_TOLERANCE
                for k, old in enumerate(unused):
                    d = vsub(ct.r_a_local, old.r_a_local)
                    d2 = vdot(d, d)
                    if d2 < best_d2:
                        best, best_d2 = k, d2
                if best is not None:
                    old = unused.pop(best)
                    ct.lambda_normal = old.lambda_normal
                    ct.lambda_tangent = old.lambda_tangent
                    ct.static_friction_applied = old.static_friction_applied
        fresh.extend(found)
    return fresh


def _body_levels(contacts: Sequence[collision.Contact]) -> Dict[int, int]:
    """Graph distance of each dynamic body from the nearest static body,
    measured through the contact graph (unsupported islands stay unmapped)."""
    adjacency: Dict[int, List[int]] = {}
    levels: Dict[int, int] = {}
    queue = []
    body_of = {}
    for ct in contacts:
        a, b = ct.body_a, ct.body_b
        body_of[id(a)] = a
        body_of[id(b)] = b
        if a.is_static and not b.is_static and id(b) not in levels:
            levels[id(b)] = 1
            queue.append(b)
        elif b.is_static and not a.is_static and id(a) not in levels:
            levels[id(a)] = 1
            queue.append(a)
        if not a.is_static and not b.is_static:
            adjacency.setdefault(id(a), []).append(id(b))
            adjacency.setdefault(id(b), []).append(id(a))
    head = 0
    while head < len(queue):
        body = queue[head]
        head += 1
        next_level = levels[id(body)] + 1
        for nb_id in adjacency.get(id(body), ()):
            if nb_id not in levels:
                levels[nb_id] = next_level
                queue.append(body_of[nb_id])
    return levels


def _velocity_solve(scene: Scene, contacts: Sequence[collision.Contact],
                    h: float, cutoff: float, substep_index: int = 0) -> None:
    # Each contact is restitution-solved exactly once per substep.  Genuinely
    # approaching contacts go first, most approaching on top, so an impulse
    # relayed through a row of touching bodies completes within one substep
    # regardless of which end was struck.  The remaining (resting) contacts
    # are absorbed from the far end of each support chain toward the static
    # bodies, which swallow the recoil, locking resting structures instead of
    # pumping them.
    if substep_index % 2 == 1:
        contacts = _manifold_alternated(contacts)
    count = len(contacts)
    body_levels = _body_levels(contacts)
    big = len(contacts) + 2

    def level_of(body):
        return 0 if body.is_static else body_levels.get(id(body), big)

    # Genuine impacts: pairs that must conserve momentum (bouncy, or nothing
    # here is rooted to a static body).  Everything else is a support contact
    # and is absorbed recoil-free instead.
    def is_impact(ct):
        if ct.body_a.material.restitution * ct.body_b.material.restitution > 0.0:
            return True
        return level_of(ct.body_a) >= big and level_of(ct.body_b) >= big

    speeds = [relative_normal_speed(ct) for ct in contacts]
    done = [False] * count
    impact = [is_impact(ct) for ct in contacts]
    by_body: Dict[int, List[int]] = {}
    for k, ct in enumerate(contacts):
        for body in (ct.body_a, ct.body_b):
            if not body.is_static:
                by_body.setdefault(id(body), []).append(k)
    while True:
        best = -1
        best_v = -cutoff
        for k in range(count):
            if impact[k] and not done[k] and speeds[k] < best_v:
                best, best_v = k, speeds[k]
        if best < 0:
            break
        done[best] = True
        ct = contacts[best]
        velocity_solve_restitution(ct, h, cutoff)
        for body in (ct.body_a, ct.body_b):
            for k in by_body.get(id(body), ()):
                if not done[k]:
                    speeds[k] = relative_normal_speed(contacts[k])
    # Absorb the rest outward from the static roots, anchoring the body that
    # sits closer to a static support so the recoil sinks into the ground in
    # one pass instead of rattling back up the chain.
    order = sorted(
        (k for k in range(count) if not done[k]),
        key=lambda i: (max(level_of(contacts[i].body_a), level_of(contacts[i].body_b)), i))
    for k in order:
        ct = contacts[k]
        la, lb = level_of(ct.body_a), level_of(ct.body_b)
        anchor = "a" if la < lb else ("b" if lb < la else None)
        if anchor is not None:
            # Anchoring is only honest while the support side is not pushing
            # into its partner; a rising piston must pay momentum for the
            # load it lifts, so it falls back to the symmetric split.
            body, r = ((ct.body_a, ct.r_a_local) if anchor == "a"
                       else (ct.body_b, ct.r_b_local))
            vp = _anchor_point_velocity(body, r)
            n = ct.normal
            along = vp[0] * n[0] + vp[1] * n[1] + vp[2] * n[2]
            toward_partner = -along if anchor == "a" else along
            if toward_partner > cutoff:
                anchor = None
        velocity_solve_restitution(ct, h, cutoff, anchor=anchor)
    for ct in contacts:
        velocity_solve_dynamic_friction(ct, h, scene.config.friction_combine)


def total_energy(scene: Scene) -> float:
    pe, ke_lin, ke_rot = energy(scene)
    return pe + ke_lin + ke_rot


def step(scene: Scene) -> StepReport:
    """Advance the scene by one frame of frame_dt split into substeps."""
    cfg = scene.config
    h = cfg.frame_dt / cfg.num_substeps
    if scene.initial_energy is None:
        scene.initial_energy = total_energy(scene)
    cutoff = cfg.restitution_cutoff
    if cutoff is None:
        cutoff = 2.0 * vnorm(cfg.gravity) * h

    pairs = collision.broad_phase(scene)
    substep_ms: List[float] = []
    for s in range(cfg.num_substeps):
        t0 = time.perf_counter()
        positional_update(scene, h)
        for c in scene.constraints:
            c.lam = 0.0
        for ct in scene.contacts:
            ct.reset_lambdas()
        if cfg.solver_mode == GAUSS_SEIDEL:
            _gauss_seidel_phase(scene, h, s)
        else:
            _jacobi_phase(scene, h, s)
        velocity_update(scene, h)
        scene.contacts = _refresh_contacts(scene, pairs, h)
        _velocity_solve(scene, scene.contacts, h, cutoff, s)
        substep_ms.append((time.perf_counter() - t0) * 1000.0)

    scene.time += cfg.frame_dt
    scene.frame_index += 1
    e_total = total_energy(scene)
    threshold = cfg.divergence_energy_factor * max(scene.initial_energy, 1.0)
    if e_total > threshold or not math.isfinite(e_total):
        scene.diverged = True
    return StepReport(substep_ms=substep_ms, diverged=scene.diverged, total_energy=e_total)
