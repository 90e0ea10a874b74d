import math

import pytest

from pbrbd.collision import narrow_phase
from pbrbd.constraints import DistanceConstraint
from pbrbd.engine import total_energy
from pbrbd.scenarios import (
    InvalidSizeError,
    ScenarioSpec,
    UnknownScenarioError,
    build,
    scenario_names,
)


def signature(scene):
    parts = []
    for b in scene.bodies:
        parts.append((b.position, b.orientation, b.velocity, b.angular_velocity_local,
                      b.inverse_mass))
    for p in scene.particles:
        parts.append((p.position, p.velocity, p.inverse_mass))
    return tuple(parts)


def test_every_scenario_builds_deterministically():
    for name in scenario_names():
        n = 12 if name in ("chain", "stack", "pyramid", "overlap_pyramid",
                           "capsule_pile") else None
        a = build(ScenarioSpec(name, n=n, seed=5))
        b = build(ScenarioSpec(name, n=n, seed=5))
        assert signature(a) == signature(b), name
        assert a.initial_energy == b.initial_energy


def max_penetration(scene):
    worst = 0.0
    bodies = [b for b in scene.bodies if b.collider is not None]
    for i, a in enumerate(bodies):
        for b in bodies[i + 1:]:
            if a.is_static and b.is_static:
                continue
            if (min(a.index, b.index), max(a.index, b.index)) in scene.collision_filter:
                continue
            try:
                contacts = narrow_phase(a, b, 0.0)
            except Exception:
                continue
            for c in contacts:
                worst = max(worst, c.depth)
    return worst


def test_scenes_start_without_interpenetration():
    for name in scenario_names():
        if name == "overlap_pyramid":
            continue
        n = 10 if name in ("chain", "stack", "pyramid", "capsule_pile") else None
        scene = build(ScenarioSpec(name, n=n))
        assert max_penetration(scene) < 1e-9, name


def test_overlap_pyramid_starts_at_the_specified_depth():
    scene = build(ScenarioSpec("overlap_pyramid", n=5))
    assert max_penetration(scene) == pytest.approx(0.4, abs=1e-9)


def test_cradle_structure():
    scene = build(ScenarioSpec("cradle"))
    anchors = [b for b in scene.bodies if b.is_static]
    spheres = [b for b in scene.bodies if not b.is_static]
    assert len(anchors) == 4 and len(spheres) == 4
    wires = [c for c in scene.constraints if isinstance(c, DistanceConstraint)]
    assert len(wires) == 4
    assert all(c.mode == "max" for c in wires)
    # leftmost sphere raised, others resting in a touching row
    assert spheres[0].position[1] > spheres[1].position[1]
    assert spheres[2].position[0] - spheres[1].position[0] == pytest.approx(1.0)
    assert scene.config.num_substeps == 40


def test_chain_has_heavy_terminal_sphere_and_twenty_substeps():
    scene = build(ScenarioSpec("chain", n=10))
    assert scene.config.num_substeps == 20
    dynamic = [b for b in scene.bodies if not b.is_static]
    assert len(dynamic) == 11  # 10 capsules + sphere
    masses = [1.0 / b.inverse_mass for b in dynamic]
    assert masses[-1] == pytest.approx(20.0 * masses[0])
    assert len(scene.constraints) == 11


def test_pyramid_count_is_square_pyramid():
    scene = build(ScenarioSpec("pyramid", n=650))
    cubes = [b for b in scene.bodies if not b.is_static]
    assert len(cubes) == 650  # 12 layers: 1^2 + ... + 12^2
    top = max(cubes, key=lambda b: b.position[1])
    assert scene.tracked_body_index == top.index


def test_invalid_inputs():
    with pytest.raises(UnknownScenarioError):
        build(ScenarioSpec("flying_teapot"))
    with pytest.raises(InvalidSizeError):
        build(ScenarioSpec("cradle", n=1))


def test_overrides_apply():
    scene = build(ScenarioSpec("stack", n=3,
                               material_overrides={"restitution": 0.25},
                               config_overrides={"num_substeps": 7}))
    assert scene.config.num_substeps == 7
    assert all(b.material.restitution == 0.25
               for b in scene.bodies if not b.is_static)
    with pytest.raises(ValueError):
        build(ScenarioSpec("stack", n=3, config_overrides={"bogus": 1}))


def test_compliance_override_reaches_constraints():
    scene = build(ScenarioSpec("triple_pendulum", compliance=1e-5))
    assert all(c.compliance == 1e-5 for c in scene.constraints)


def test_initial_energy_recorded():
    scene = build(ScenarioSpec("triple_pendulum"))
    assert scene.initial_energy == pytest.approx(total_energy(scene))
    assert scene.initial_energy == pytest.approx(3 * 9.81 * 3.5)
