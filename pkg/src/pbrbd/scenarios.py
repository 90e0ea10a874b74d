"""Deterministic builders for the benchmark scenes.

Dimensions the benchmark catalog leaves open are fixed here, in one place:

    cube               side 1 m, mass 1 kg
    sphere             radius 0.5 m, mass 1 kg
    capsule            half length 0.5 m, radius 0.1 m, mass 1 kg
    heavy chain sphere 20x capsule mass, radius 0.5 m
    cradle wire        2 m, striker raised 60 degrees from vertical
    ramp               20 x 1 x 4 m slab inclined 30 degrees
    pyramid            square base, layers shrink by one cube per side

Scenes are positioned so nothing starts below the y = 0 energy reference
plane.  Rebuilding a spec yields a bit-identical scene; the seed only feeds
the capsule-pile jitter.
"""
from __future__ import annotations

import math
import random
from dataclasses import dataclass, field, fields
from typing import Dict, Optional

from .bodies import Material, Particle, make_rigid_body, make_static_body
from .collision import Box, Capsule, HalfSpace, Sphere
from .constraints import AnchorConstraint, DistanceConstraint, VolumeConstraint, volume6
from .engine import Scene, SolverConfig, total_energy
from .vecmath import qfrom_axis_angle, rotate, vadd, vscale, vsub

CUBE_SIDE = 1.0
CUBE_MASS = 1.0
SPHERE_RADIUS = 0.5
SPHERE_MASS = 1.0
CAPSULE_HALF_LENGTH = 0.5
CAPSULE_RADIUS = 0.1
CAPSULE_MASS = 1.0
HEAVY_SPHERE_FACTOR = 20.0
WIRE_LENGTH = 2.0
STRIKER_ANGLE = math.radians(60.0)
RAMP_ANGLE = math.radians(30.0)
RAMP_HALF_EXTENTS = (10.0, 0.5, 2.0)
OVERLAP_DEPTH = 0.4


class UnknownScenarioError(ValueError):
    pass


class InvalidSizeError(ValueError):
    pass


@dataclass
class ScenarioSpec:
    name: str
    n: Optional[int] = None  # element count; None picks the scenario default
    seed: int = 0
    compliance: Optional[float] = None  # override for built joint constraints
    material_overrides: Dict[str, float] = field(default_factory=dict)
    config_overrides: Dict[str, object] = field(default_factory=dict)


def _cube(position, material, orientation=(1.0, 0.0, 0.0, 0.0)):
    half = CUBE_SIDE / 2.0
    return make_rigid_body(Box((half, half, half)), CUBE_MASS, position,
                           orientation=orientation, material=material)


def _ground(material) -> object:
    return make_static_body(HalfSpace((0.0, 1.0, 0.0), 0.0), material=material)


def _build_cradle(scene: Scene, n: int, spec: ScenarioSpec) -> None:
    scene.config.num_substeps = 40
    mat = Material(restitution=1.0)
    anchor_y = WIRE_LENGTH + SPHERE_RADIUS
    spacing = 2.0 * SPHERE_RADIUS
    for i in range(n):
        anchor = scene.add_body(make_static_body(position=(i * spacing, anchor_y, 0.0)))
        if i == 0:
            # The striker hangs raised to the side on a taut wire.
            offset = (-WIRE_LENGTH * math.sin(STRIKER_ANGLE),
                      -WIRE_LENGTH * math.cos(STRIKER_ANGLE), 0.0)
            position = vadd(anchor.position, offset)
        else:
            position = (i * spacing, SPHERE_RADIUS, 0.0)
        sphere = scene.add_body(
            make_rigid_body(Sphere(SPHERE_RADIUS), SPHERE_MASS, position, material=mat))
        scene.add_constraint(DistanceConstraint(
            a=sphere, b=anchor, rest=WIRE_LENGTH, mode="max"))
    scene.track(scene.bodies[-1])


def _build_triple_pendulum(scene: Scene, n: int, spec: ScenarioSpec) -> None:
    scene.config.num_substeps = 20
    anchor_y = n + 0.5
    anchor = scene.add_particle(Particle((0.0, anchor_y, 0.0), inverse_mass=0.0))
    prev = anchor
    for i in range(1, n + 1):
        p = scene.add_particle(Particle((float(i), anchor_y, 0.0)))
        scene.add_constraint(DistanceConstraint(a=prev, b=p, rest=1.0))
        prev = p


def _build_chain(scene: Scene, n: int, spec: ScenarioSpec) -> None:
    scene.config.num_substeps = 20
    mat = Material()
    link = 2.0 * (CAPSULE_HALF_LENGTH + CAPSULE_RADIUS)
    tip = CAPSULE_HALF_LENGTH + CAPSULE_RADIUS
    height = n * link + 2.0 * SPHERE_RADIUS + 0.5
    q_link = qfrom_axis_angle((0.0, 0.0, 1.0), -math.pi / 2.0)  # local +y -> +x

    anchor = scene.add_body(make_static_body(position=(0.0, height, 0.0)))
    prev = None
    for i in range(n):
        cap = scene.add_body(make_rigid_body(
            Capsule(CAPSULE_HALF_LENGTH, CAPSULE_RADIUS), CAPSULE_MASS,
            ((i + 0.5) * link, height, 0.0), orientation=q_link, material=mat))
        if prev is None:
            scene.add_constraint(DistanceConstraint(
                a=anchor, b=cap, r_b_local=(0.0, -tip, 0.0), rest=0.0))
        else:
            scene.add_constraint(DistanceConstraint(
                a=prev, r_a_local=(0.0, tip, 0.0),
                b=cap, r_b_local=(0.0, -tip, 0.0), rest=0.0))
        prev = cap
    heavy = scene.add_body(make_rigid_body(
        Sphere(SPHERE_RADIUS), HEAVY_SPHERE_FACTOR * CAPSULE_MASS,
        (n * link + SPHERE_RADIUS, height, 0.0), material=mat))
    scene.add_constraint(DistanceConstraint(
        a=prev, r_a_local=(0.0, tip, 0.0),
        b=heavy, r_b_local=(-SPHERE_RADIUS, 0.0, 0.0), rest=0.0))
    scene.track(heavy)


def _build_stack(scene: Scene, n: int, spec: ScenarioSpec) -> None:
    # Tall columns rest inside a widened penetration tolerance: corrections
    # stop firing once the load is carried, which keeps the column from
    # ringing itself apart.
    scene.config.num_substeps = 20
    scene.config.slop = 0.01
    mat = Material(static_friction=0.7, dynamic_friction=0.5)
    scene.add_body(_ground(mat))
    for i in range(n):
        scene.add_body(_cube((0.0, 0.5 * CUBE_SIDE + i * CUBE_SIDE, 0.0), mat))
    scene.track(scene.bodies[-1])


def _pyramid_layers(n_total: int) -> int:
    """Largest layer count whose square pyramid uses at most n_total cubes."""
    k = 1
    while (k + 1) * (k + 2) * (2 * k + 3) // 6 <= n_total:
        k += 1
    return k


def _build_pyramid(scene: Scene, n: int, spec: ScenarioSpec,
                   overlap: float = 0.0) -> None:
    scene.config.num_substeps = 10
    mat = Material(static_friction=0.7, dynamic_friction=0.5)
    scene.add_body(_ground(mat))
    layers = _pyramid_layers(n)
    base_y = 0.5 * CUBE_SIDE - overlap
    step_y = CUBE_SIDE - overlap
    for level in range(layers):
        side = layers - level
        y = base_y + level * step_y
        for i in range(side):
            x = (i - (side - 1) / 2.0) * CUBE_SIDE
            for j in range(side):
                z = (j - (side - 1) / 2.0) * CUBE_SIDE
                scene.add_body(_cube((x, y, z), mat))
    scene.track(scene.bodies[-1])


def _build_spin(scene: Scene, half_extents, spec: ScenarioSpec) -> None:
    scene.config.num_substeps = 20
    mat = Material(restitution=1.0)
    scene.add_body(_ground(mat))
    body = scene.add_body(make_rigid_body(
        Box(half_extents), CUBE_MASS, (0.0, 2.0, 0.0), material=mat,
        angular_velocity_local=(4.0, 0.15, 0.15)))
    scene.track(body)


def ramp_orientation():
    return qfrom_axis_angle((0.0, 0.0, 1.0), -RAMP_ANGLE)


def ramp_position():
    return (0.0, 6.0, 0.0)


def ramp_surface_point(local_x: float, clearance: float):
    """World point `clearance` above the ramp's top surface at local x."""
    q = ramp_orientation()
    local = (local_x, RAMP_HALF_EXTENTS[1] + clearance, 0.0)
    return vadd(ramp_position(), rotate(q, local))


def _build_ramp(scene: Scene, spec: ScenarioSpec, shape: str) -> None:
    scene.config.num_substeps = 20
    mat = Material(static_friction=0.3, dynamic_friction=0.3)
    q = ramp_orientation()
    scene.add_body(make_static_body(
        Box(RAMP_HALF_EXTENTS), ramp_position(), orientation=q, material=mat))
    if shape == "sphere":
        body = make_rigid_body(
            Sphere(SPHERE_RADIUS), SPHERE_MASS,
            ramp_surface_point(-8.0, SPHERE_RADIUS), material=mat)
    else:
        half = CUBE_SIDE / 2.0
        body = make_rigid_body(
            Box((half, half, half)), CUBE_MASS,
            ramp_surface_point(-8.0, half), orientation=q, material=mat)
    scene.add_body(body)
    scene.track(body)


def _build_overconstrained_chain(scene: Scene, n: int, spec: ScenarioSpec) -> None:
    # Capsule links strung between anchors 1.2x further apart than the chain
    # can reach: no feasible state exists, which is the point.  Joints rest at
    # the cap diameter so neighboring caps sit exactly in contact and stay
    # collidable; the stretch pulls one way, the contacts push the other.
    # Gravity is off so the infeasibility alone drives the solver behavior;
    # an odd substep count keeps a period-two substep oscillation visible at
    # the frame sampling cadence.
    scene.config.num_substeps = 21
    scene.config.gravity = (0.0, 0.0, 0.0)
    link = 2.0 * (CAPSULE_HALF_LENGTH + CAPSULE_RADIUS)
    tip = CAPSULE_HALF_LENGTH + CAPSULE_RADIUS
    joint = 2.0 * CAPSULE_RADIUS
    rest_total = n * link + (n - 1) * joint
    span = 1.2 * rest_total
    pitch = span / n
    y = 2.0
    q_link = qfrom_axis_angle((0.0, 0.0, 1.0), -math.pi / 2.0)  # local +y -> +x
    anchor_a = scene.add_body(make_static_body(position=(0.0, y, 0.0)))
    anchor_b = scene.add_body(make_static_body(position=(span, y, 0.0)))
    prev = None
    for i in range(n):
        cap = scene.add_body(make_rigid_body(
            Capsule(CAPSULE_HALF_LENGTH, CAPSULE_RADIUS), CAPSULE_MASS,
            ((i + 0.5) * pitch, y, 0.0), orientation=q_link))
        if prev is None:
            scene.add_constraint(DistanceConstraint(
                a=anchor_a, b=cap, r_b_local=(0.0, -tip, 0.0), rest=0.0))
        else:
            scene.add_constraint(DistanceConstraint(
                a=prev, r_a_local=(0.0, tip, 0.0),
                b=cap, r_b_local=(0.0, -tip, 0.0), rest=joint),
                collide_connected=True)
        prev = cap
    scene.add_constraint(DistanceConstraint(
        a=prev, r_a_local=(0.0, tip, 0.0), b=anchor_b, rest=0.0))


def _build_capsule_pile(scene: Scene, n: int, spec: ScenarioSpec) -> None:
    scene.config.num_substeps = 10
    mat = Material(static_friction=0.5, dynamic_friction=0.4)
    scene.add_body(_ground(mat))
    rng = random.Random(spec.seed)
    cols = max(1, math.ceil(math.sqrt(n)))
    spacing = 1.6
    for i in range(n):
        row, col = divmod(i, cols)
        x = (col - (cols - 1) / 2.0) * spacing + rng.uniform(-0.2, 0.2)
        z = rng.uniform(-0.4, 0.4)
        y = 1.5 + row * 1.4
        axis = (rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0))
        q = qfrom_axis_angle(axis, rng.uniform(0.0, math.pi))
        scene.add_body(make_rigid_body(
            Capsule(CAPSULE_HALF_LENGTH, CAPSULE_RADIUS), CAPSULE_MASS,
            (x, y, z), orientation=q, material=mat))
    scene.track(scene.bodies[-1])


_TETRA_LOCAL = ((1.0, 1.0, 1.0), (1.0, -1.0, -1.0), (-1.0, -1.0, 1.0), (-1.0, 1.0, -1.0))


def _build_softbody_tetra(scene: Scene, n: int, spec: ScenarioSpec) -> None:
    # Particle tetrahedra inflated by 10%: the edge and volume constraints
    # pull them back to rest.  Gravity is off so the relaxation is isolated.
    scene.config.num_substeps = 10
    scene.config.gravity = (0.0, 0.0, 0.0)
    scale = 0.5
    inflate = 1.1
    for blob in range(n):
        center = (blob * 3.0, 2.0, 0.0)
        rest_pos = [vadd(center, vscale(v, scale)) for v in _TETRA_LOCAL]
        parts = [scene.add_particle(Particle(vadd(center, vscale(vsub(p, center), inflate))))
                 for p in rest_pos]
        for i in range(4):
            for j in range(i + 1, 4):
                rest = math.dist(rest_pos[i], rest_pos[j])
                scene.add_constraint(DistanceConstraint(a=parts[i], b=parts[j], rest=rest))
        rest_volume = volume6(*rest_pos) / 6.0
        scene.add_constraint(VolumeConstraint(
            p1=parts[0], p2=parts[1], p3=parts[2], p4=parts[3],
            rest_volume=rest_volume))


def _build_drag_anchor(scene: Scene, n: int, spec: ScenarioSpec) -> None:
    scene.config.num_substeps = 10
    half = CUBE_SIDE / 2.0
    body = scene.add_body(make_rigid_body(
        Box((half, half, half)), CUBE_MASS, (0.0, 1.0, 0.0)))
    frames = 120
    path = [(2.0 * f / frames, 1.0, 0.0) for f in range(frames + 1)]
    scene.add_constraint(AnchorConstraint(body=body, r_local=(0.0, 0.0, 0.0), path=path))
    scene.track(body)


_SCENARIOS = {
    # name: (builder, default n, minimum n, description)
    "cradle": (_build_cradle, 4, 2,
               "swinging-sphere momentum cradle on slack wires"),
    "triple_pendulum": (_build_triple_pendulum, 3, 1,
                        "particle chain pendulum released horizontally"),
    "chain": (_build_chain, 100, 1,
              "capsule chain with a heavy terminal sphere"),
    "stack": (_build_stack, 100, 1, "vertical stack of unit cubes"),
    "pyramid": (_build_pyramid, 650, 1, "square pyramid of unit cubes"),
    "rod_spin": (lambda s, n, sp: _build_spin(s, (0.1, 0.1, 1.0), sp), 1, 1,
                 "spinning rod cuboid dropped on the ground"),
    "plane_spin": (lambda s, n, sp: _build_spin(s, (1.0, 1.0, 0.1), sp), 1, 1,
                   "spinning plate cuboid dropped on the ground"),
    "ramp_cube": (lambda s, n, sp: _build_ramp(s, sp, "cube"), 1, 1,
                  "cube released on a 30 degree ramp with friction 0.3"),
    "ramp_sphere": (lambda s, n, sp: _build_ramp(s, sp, "sphere"), 1, 1,
                    "sphere released on a 30 degree ramp with friction 0.3"),
    "overlap_pyramid": (lambda s, n, sp: _build_pyramid(s, n, sp, OVERLAP_DEPTH), 650, 1,
                        "pyramid whose layers start interpenetrating by 0.4 m"),
    "overconstrained_chain": (_build_overconstrained_chain, 6, 1,
                              "chain strung between anchors it cannot reach"),
    "capsule_pile": (_build_capsule_pile, 30, 1,
                     "capsules dropped into a pile (seeded jitter)"),
    "softbody_tetra": (_build_softbody_tetra, 1, 1,
                       "inflated particle tetrahedra relaxing to rest shape"),
    "drag_anchor": (_build_drag_anchor, 1, 1,
                    "cube dragged along a scripted interpolated anchor path"),
}


def scenario_names():
    return list(_SCENARIOS)


def scenario_description(name: str) -> str:
    return _SCENARIOS[name][3]


def default_size(name: str) -> int:
    return _SCENARIOS[name][1]


def build(spec: ScenarioSpec) -> Scene:
    """Build a fully populated scene for the given spec.

    Deterministic: the same spec always yields a bit-identical scene.
    """
    if spec.name not in _SCENARIOS:
        raise UnknownScenarioError(
            f"unknown scenario {spec.name!r}; choose from {', '.join(_SCENARIOS)}")
    builder, default_n, min_n, _ = _SCENARIOS[spec.name]
    n = default_n if spec.n is None else spec.n
    if n < min_n:
        raise InvalidSizeError(f"scenario {spec.name!r} needs n >= {min_n}, got {n}")

    scene = Scene(config=SolverConfig())
    builder(scene, n, spec)

    if spec.compliance is not None:
        for c in scene.constraints:
            c.compliance = spec.compliance
    for key, value in spec.material_overrides.items():
        for body in scene.bodies:
            if body.is_static:
                continue
            if not hasattr(body.material, key):
                raise ValueError(f"unknown material field {key!r}")
            setattr(body.material, key, value)
    config_fields = {f.name for f in fields(SolverConfig)}
    for key, value in spec.config_overrides.items():
        if key not in config_fields:
            raise ValueError(f"unknown solver config field {key!r}")
        setattr(scene.config, key, value)

    scene.initial_energy = total_energy(scene)
    return scene
