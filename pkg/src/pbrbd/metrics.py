"""Energy accounting, drift measurement, oscillation detection and CSV output.

The potential energy reference plane is fixed at y = 0; every consumer works
with energy differences, so the choice only shifts curves by a constant.
Sampling cadence is one row per frame, with solver timing averaged per
substep within the frame.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, fields
from typing import List, Sequence, Tuple

from .bodies import RigidBody
from .vecmath import Vec3, mat_vec, vdot, vnorm, vnorm2

CSV_HEADER = ("t", "pe", "ke_lin", "ke_rot", "total", "dev_h", "dev_v",
              "ms_substep", "diverged")


@dataclass
class MetricsRow:
    t: float
    pe: float
    ke_lin: float
    ke_rot: float
    total: float
    dev_h: float
    dev_v: float
    ms_substep: float
    diverged: bool


def energy(scene) -> Tuple[float, float, float]:
    """(potential, linear kinetic, rotational kinetic) over all dynamic
    bodies and particles; statics contribute nothing."""
    g = vnorm(scene.config.gravity)
    pe = 0.0
    ke_lin = 0.0
    ke_rot = 0.0
    for p in scene.particles:
        if p.inverse_mass == 0.0:
            continue
        m = 1.0 / p.inverse_mass
        pe += m * g * p.position[1]
        ke_lin += 0.5 * m * vnorm2(p.velocity)
    for b in scene.bodies:
        if b.inverse_mass == 0.0:
            continue
        m = 1.0 / b.inverse_mass
        pe += m * g * b.position[1]
        ke_lin += 0.5 * m * vnorm2(b.velocity)
        w = b.angular_velocity_local
        ke_rot += 0.5 * vdot(w, mat_vec(b.inertia_body, w))
    return pe, ke_lin, ke_rot


def top_body_deviation(scene, body: RigidBody, initial_position: Vec3) -> Tuple[float, float]:
    """Horizontal (in-plane) and vertical distance from a body's start pose;
    the two are reported separately to tell drift from compression."""
    dx = body.position[0] - initial_position[0]
    dy = body.position[1] - initial_position[1]
    dz = body.position[2] - initial_position[2]
    return math.sqrt(dx * dx + dz * dz), abs(dy)


def _state_distance(a, b) -> float:
    if isinstance(a, (int, float)):
        return abs(a - b)
    acc = 0.0
    for x, y in zip(a, b):
        d = x - y
        acc += d * d
    return math.sqrt(acc)


def oscillation_detector(series: Sequence, window: int = 8,
                         amplitude: float = 1e-3, drift: float = 1e-5) -> bool:
    """Flag a stable period-2 alternation: consecutive samples hop between two
    clusters further than `amplitude` apart while samples two steps apart stay
    within `drift` of each other."""
    if window < 4:
        raise ValueError("window must be at least 4 samples")
    if len(series) < window:
        return False
    tail = list(series)[-window:]
    for i in range(len(tail) - 2):
        if _state_distance(tail[i + 2], tail[i]) > drift:
            return False
    for i in range(len(tail) - 1):
        if _state_distance(tail[i + 1], tail[i]) <= amplitude:
            return False
    return True


def sample_row(scene, report, t: float) -> MetricsRow:
    """One per-frame metrics sample taken after a completed step."""
    pe, ke_lin, ke_rot = energy(scene)
    dev_h = dev_v = 0.0
    if scene.tracked_body_index is not None:
        body = scene.bodies[scene.tracked_body_index]
        dev_h, dev_v = top_body_deviation(scene, body, scene.tracked_initial_position)
    ms = sum(report.substep_ms) / len(report.substep_ms) if report.substep_ms else 0.0
    return MetricsRow(
        t=t,
        pe=pe,
        ke_lin=ke_lin,
        ke_rot=ke_rot,
        total=pe + ke_lin + ke_rot,
        dev_h=dev_h,
        dev_v=dev_v,
        ms_substep=ms,
        diverged=report.diverged,
    )


def write_csv(rows: Sequence[MetricsRow], path) -> None:
    """Write rows in the fixed column order with round-trip float precision."""
    try:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(CSV_HEADER)
            for row in rows:
                writer.writerow([
                    repr(row.t), repr(row.pe), repr(row.ke_lin), repr(row.ke_rot),
                    repr(row.total), repr(row.dev_h), repr(row.dev_v),
                    repr(row.ms_substep), int(row.diverged),
                ])
    except OSError as err:
        raise OSError(f"failed to write metrics CSV to {path}: {err}") from err


def read_csv(path) -> List[MetricsRow]:
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = tuple(next(reader))
        if header != CSV_HEADER:
            raise ValueError(f"unexpected metrics header in {path}: {header}")
        for rec in reader:
            rows.append(MetricsRow(
                t=float(rec[0]), pe=float(rec[1]), ke_lin=float(rec[2]),
                ke_rot=float(rec[3]), total=float(rec[4]), dev_h=float(rec[5]),
                dev_v=float(rec[6]), ms_substep=float(rec[7]),
                diverged=bool(int(rec[8])),
            ))
    return rows
