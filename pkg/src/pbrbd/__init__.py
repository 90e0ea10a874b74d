"""Double-precision position based rigid body dynamics with a benchmark harness."""

from .bodies import (
    Material,
    Particle,
    RigidBody,
    inertia_tensor,
    make_rigid_body,
    make_static_body,
)
from .collision import Box, Capsule, Contact, HalfSpace, Sphere
from .constraints import (
    AnchorConstraint,
    BallJointConstraint,
    DistanceConstraint,
    HingeConstraint,
    VolumeConstraint,
)
from .engine import Scene, SolverConfig, StepReport, step
from .scenarios import ScenarioSpec, build

__version__ = "0.1.0"

__all__ = [
    "AnchorConstraint", "BallJointConstraint", "Box", "Capsule", "Contact",
    "DistanceConstraint", "HalfSpace", "HingeConstraint", "Material",
    "Particle", "RigidBody", "Scene", "ScenarioSpec", "SolverConfig",
    "Sphere", "StepReport", "VolumeConstraint", "build", "inertia_tensor",
    "make_rigid_body", "make_static_body", "step",
]
