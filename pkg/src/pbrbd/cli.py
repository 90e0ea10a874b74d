"""Command-line front door: run scenarios, sweep parameters, emit CSV metrics
and machine-readable run summaries.

Commands: run, sweep, list-scenarios, print-config.  A flat key=value config
file can pre-set any flag; explicit flags win.  Exit code is 0 for every
completed simulation (diverged or not) and nonzero only for configuration or
I/O errors.
"""
from __future__ import annotations

import argparse
import json
import statistics
import sys
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence

from . import metrics, scenarios
from .engine import SolverConfig, step
from .scenarios import ScenarioSpec


@dataclass
class RunManifest:
    spec: ScenarioSpec
    duration: float = 10.0
    out_dir: Path = Path("out")
    label: Optional[str] = None
    record_timing: bool = True

    def __post_init__(self):
        if self.duration <= 0.0:
            raise ValueError("duration must be positive")


def run(manifest: RunManifest) -> dict:
    """Simulate duration/frame_dt frames; write the metrics CSV and a summary
    JSON document.  Stops early (with the flag in the summary) if the
    divergence detector fires, so blowups end in a report instead of NaNs."""
    scene = scenarios.build(manifest.spec)
    frame_dt = scene.config.frame_dt
    frames = max(1, round(manifest.duration / frame_dt))
    label = manifest.label or manifest.spec.name

    rows: List[metrics.MetricsRow] = []
    for _ in range(frames):
        report = step(scene)
        row = metrics.sample_row(scene, report, scene.time)
        if not manifest.record_timing:
            row.ms_substep = 0.0
        rows.append(row)
        if scene.diverged:
            break

    out_dir = Path(manifest.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / f"{label}.csv"
    metrics.write_csv(rows, csv_path)

    totals = [r.total for r in rows]
    summary = {
        "scenario": manifest.spec.name,
        "n": manifest.spec.n,
        "seed": manifest.spec.seed,
        "solver": scene.config.solver_mode,
        "substeps": scene.config.num_substeps,
        "iterations": scene.config.iterations_per_substep,
        "parallel": scene.config.parallel,
        "duration": manifest.duration,
        "frames_run": len(rows),
        "initial_energy": scene.initial_energy,
        "final_energy": totals[-1],
        "min_energy": min(totals),
        "max_energy": max(totals),
        "max_dev_h": max(r.dev_h for r in rows),
        "max_dev_v": max(r.dev_v for r in rows),
        "diverged": scene.diverged,
        "mean_ms_substep": statistics.fmean(r.ms_substep for r in rows),
        "csv": str(csv_path),
    }
    summary_path = out_dir / f"{label}_summary.json"
    summary_path.write_text(json.dumps(summary, indent=2) + "\n")
    return summary


def linear_fit(xs: Sequence[float], ys: Sequence[float]) -> dict:
    """Least-squares line through (xs, ys) with its R^2; flags degenerate
    inputs (fewer than two distinct x values) instead of fitting."""
    if len(xs) < 2 or len(set(xs)) < 2:
        return {"degenerate": True, "slope": None, "intercept": None, "r_squared": None}
    fit = statistics.linear_regression(xs, ys)
    mean_y = statistics.fmean(ys)
    ss_tot = sum((y - mean_y) ** 2 for y in ys)
    ss_res = sum((y - (fit.slope * x + fit.intercept)) ** 2 for x, y in zip(xs, ys))
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot
    return {"degenerate": False, "slope": fit.slope, "intercept": fit.intercept,
            "r_squared": r2}


SWEEP_PARAMETERS = ("n", "substeps")


def sweep(manifest: RunManifest, parameter: str, values: Sequence[int]) -> dict:
    """One run per value; writes a scaling table (value, mean ms/substep) and
    a least-squares fit report alongside the per-value CSVs."""
    if parameter not in SWEEP_PARAMETERS:
        raise ValueError(f"sweep parameter must be one of {SWEEP_PARAMETERS}")
    results = []
    for value in values:
        spec = replace(manifest.spec)
        spec.material_overrides = dict(manifest.spec.material_overrides)
        spec.config_overrides = dict(manifest.spec.config_overrides)
        if parameter == "n":
            spec.n = value
        else:
            spec.config_overrides["num_substeps"] = value
        label = f"{manifest.spec.name}_{parameter}{value}"
        sub = replace(manifest, spec=spec, label=label)
        results.append((value, run(sub)))

    out_dir = Path(manifest.out_dir)
    table_path = out_dir / f"{manifest.spec.name}_{parameter}_scaling.csv"
    with open(table_path, "w") as fh:
        fh.write("value,mean_ms_substep\n")
        for value, summary in results:
            fh.write(f"{value},{summary['mean_ms_substep']!r}\n")

    xs = [float(v) for v, _ in results]
    ys = [s["mean_ms_substep"] for _, s in results]
    report = {
        "scenario": manifest.spec.name,
        "parameter": parameter,
        "values": list(values),
        "mean_ms_substep": ys,
        "fit": linear_fit(xs, ys),
        "scaling_csv": str(table_path),
        "runs": [s["csv"] for _, s in results],
    }
    report_path = out_dir / f"{manifest.spec.name}_{parameter}_sweep_summary.json"
    report_path.write_text(json.dumps(report, indent=2) + "\n")
    return report


# --------------------------------------------------------------------------
# argument handling
# --------------------------------------------------------------------------

_CONFIG_KEYS = {
    "scenario": str, "n": int, "duration": float, "substeps": int,
    "iterations": int, "solver": str, "parallel": bool, "seed": int,
    "compliance": float, "out": str, "timing": bool,
    "frame_dt": float, "jacobi_relaxation": float, "slop": float,
    "divergence_energy_factor": float, "friction_combine": str,
    "restitution_cutoff": float,
}

_DEFAULTS = {
    "scenario": None, "n": None, "duration": 10.0, "substeps": None,
    "iterations": None, "solver": None, "parallel": False, "seed": 0,
    "compliance": None, "out": "out", "timing": True,
}


def parse_config_file(path: Path) -> Dict[str, object]:
    values: Dict[str, object] = {}
    for lineno, line in enumerate(path.read_text().splitlines(), 1):
        text = line.split("#", 1)[0].strip()
        if not text:
            continue
        if "=" not in text:
            raise ValueError(f"{path}:{lineno}: expected key = value, got {line!r}")
        key, _, raw = text.partition("=")
        key = key.strip()
        raw = raw.strip()
        if key not in _CONFIG_KEYS:
            raise ValueError(f"{path}:{lineno}: unknown config key {key!r}")
        kind = _CONFIG_KEYS[key]
        if kind is bool:
            values[key] = raw.lower() in ("1", "true", "yes", "on")
        else:
            values[key] = kind(raw)
    return values


def _add_run_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("scenario_pos", nargs="?", metavar="scenario",
                        help="scenario name (same as --scenario)")
    parser.add_argument("--scenario", help="scenario name")
    parser.add_argument("--n", type=int, help="element count override")
    parser.add_argument("--duration", type=float, help="simulated seconds (default 10)")
    parser.add_argument("--substeps", type=int, help="substeps per frame")
    parser.add_argument("--iterations", type=int, help="solver iterations per substep")
    parser.add_argument("--solver", choices=("gs", "jacobi"), help="solver mode")
    parser.add_argument("--parallel", action="store_true", default=None,
                        help="enable the parallel solve schedule")
    parser.add_argument("--seed", type=int, help="seed for scenario jitter")
    parser.add_argument("--compliance", type=float,
                        help="override joint compliance for the built scene")
    parser.add_argument("--out", help="output directory (default ./out)")
    parser.add_argument("--config", type=Path, help="flat key=value config file")
    parser.add_argument("--no-timing", dest="timing", action="store_false", default=None,
                        help="write ms_substep as 0 for byte-reproducible CSVs")
    parser.add_argument("--print-config", action="store_true",
                        help="print the effective settings and exit")


def _effective_settings(args) -> Dict[str, object]:
    settings = dict(_DEFAULTS)
    if getattr(args, "config", None):
        settings.update(parse_config_file(args.config))
    for key in _DEFAULTS:
        flag = getattr(args, key, None)
        if flag is not None:
            settings[key] = flag
    if getattr(args, "scenario_pos", None):
        if settings["scenario"] and settings["scenario"] != args.scenario_pos:
            raise ValueError("scenario given twice with different values")
        settings["scenario"] = args.scenario_pos
    return settings


def _manifest_from(settings: Dict[str, object]) -> RunManifest:
    if not settings["scenario"]:
        raise ValueError("a scenario is required (positional or --scenario)")
    config_overrides: Dict[str, object] = {}
    if settings["substeps"] is not None:
        config_overrides["num_substeps"] = settings["substeps"]
    if settings["iterations"] is not None:
        config_overrides["iterations_per_substep"] = settings["iterations"]
    if settings["solver"] is not None:
        config_overrides["solver_mode"] = settings["solver"]
    if settings["parallel"]:
        config_overrides["parallel"] = True
    spec = ScenarioSpec(
        name=settings["scenario"],
        n=settings["n"],
        seed=settings["seed"],
        compliance=settings["compliance"],
        config_overrides=config_overrides,
    )
    return RunManifest(
        spec=spec,
        duration=settings["duration"],
        out_dir=Path(settings["out"]),
        record_timing=settings["timing"],
    )


def _print_settings(settings: Dict[str, object]) -> None:
    for key in sorted(_CONFIG_KEYS):
        if key in settings:
            print(f"{key} = {settings[key]}")
    defaults = SolverConfig()
    for f in fields(SolverConfig):
        if f.name not in settings:
            print(f"{f.name} = {getattr(defaults, f.name)}")


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = argparse.ArgumentParser(
        prog="pbrbd", description="position based rigid body benchmark harness")
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="simulate one scenario")
    _add_run_flags(run_p)

    sweep_p = sub.add_parser("sweep", help="run a scenario over a parameter range")
    _add_run_flags(sweep_p)
    sweep_p.add_argument("--parameter", choices=SWEEP_PARAMETERS, required=True)
    sweep_p.add_argument("--values", required=True,
                         help="comma-separated integer values, e.g. 50,100,200")

    sub.add_parser("list-scenarios", help="list scenario names")
    sub.add_parser("print-config", help="print every default setting")

    args = parser.parse_args(argv)
    try:
        if args.command == "list-scenarios":
            for name in scenarios.scenario_names():
                print(f"{name:24s} n>={1} default n={scenarios.default_size(name):4d}  "
                      f"{scenarios.scenario_description(name)}")
            return 0
        if args.command == "print-config":
            _print_settings(dict(_DEFAULTS))
            return 0

        settings = _effective_settings(args)
        if args.print_config:
            _print_settings(settings)
            return 0
        manifest = _manifest_from(settings)
        if args.command == "run":
            summary = run(manifest)
            print(json.dumps(summary, indent=2))
            return 0
        values = [int(v) for v in args.values.split(",") if v]
        if not values:
            raise ValueError("--values must list at least one integer")
        report = sweep(manifest, args.parameter, values)
        print(json.dumps(report, indent=2))
        return 0
    except (ValueError, OSError, scenarios.UnknownScenarioError,
            scenarios.InvalidSizeError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
