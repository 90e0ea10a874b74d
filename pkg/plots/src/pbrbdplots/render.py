"""Turn benchmark metrics CSVs into figures.

Three kinds of plot:

    energy     total energy vs time, one curve per labeled series
    deviation  horizontal and vertical tracked-body deviation vs time
    scaling    mean ms/substep vs swept value, with a least-squares line

Energy and deviation consume the simulator's metrics CSV schema; scaling
consumes the sweep harness's scaling table.  Rendering is read-only and the
plotted arrays are exactly the parsed columns, so re-rendering identical
inputs yields an identical data layer.  Styling is fixed: one kind per
image, no subplots.
"""
from __future__ import annotations

import csv
import statistics
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

METRICS_HEADER = ("t", "pe", "ke_lin", "ke_rot", "total", "dev_h", "dev_v",
                  "ms_substep", "diverged")
SCALING_HEADER = ("value", "mean_ms_substep")

PLOT_KINDS = ("energy", "deviation", "scaling")


class SchemaError(ValueError):
    """Raised when an input CSV does not match the schema the kind needs."""


@dataclass
class PlotSpec:
    inputs: List[Tuple[str, Path]]  # (series label, csv path)
    kind: str
    out: Path
    title: Optional[str] = None

    def __post_init__(self):
        if not self.inputs:
            raise ValueError("at least one input series is required")
        if self.kind not in PLOT_KINDS:
            raise ValueError(f"unknown plot kind {self.kind!r}")


def read_columns(path, expected_header) -> dict:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = tuple(next(reader, ()))
        if header != tuple(expected_header):
            raise SchemaError(
                f"{path}: expected columns {','.join(expected_header)}, "
                f"got {','.join(header)}")
        columns = {name: [] for name in header}
        for row in reader:
            for name, cell in zip(header, row):
                columns[name].append(float(cell))
    return columns


def scaling_fit(values: Sequence[float], ms: Sequence[float]) -> dict:
    """Least-squares line and R^2, matching the sweep harness's computation."""
    if len(values) < 2 or len(set(values)) < 2:
        return {"degenerate": True, "slope": None, "intercept": None,
                "r_squared": None}
    fit = statistics.linear_regression(values, ms)
    mean_y = statistics.fmean(ms)
    ss_tot = sum((y - mean_y) ** 2 for y in ms)
    ss_res = sum((y - (fit.slope * x + fit.intercept)) ** 2
                 for x, y in zip(values, ms))
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot
    return {"degenerate": False, "slope": fit.slope, "intercept": fit.intercept,
            "r_squared": r2}


def render(spec: PlotSpec):
    """Render the figure described by spec, save it to spec.out and return
    (figure, info dict).  The info dict carries the recomputed fit for
    scaling plots."""
    fig, ax = plt.subplots(figsize=(8.0, 5.0))
    info = {}

    if spec.kind == "energy":
        for label, path in spec.inputs:
            cols = read_columns(path, METRICS_HEADER)
            ax.plot(cols["t"], cols["total"], label=label, linewidth=1.2)
        ax.set_xlabel("time [s]")
        ax.set_ylabel("total energy [J]")
    elif spec.kind == "deviation":
        for label, path in spec.inputs:
            cols = read_columns(path, METRICS_HEADER)
            ax.plot(cols["t"], cols["dev_h"], label=f"{label} horizontal",
                    linewidth=1.2)
            ax.plot(cols["t"], cols["dev_v"], label=f"{label} vertical",
                    linewidth=1.2, linestyle="--")
        ax.set_xlabel("time [s]")
        ax.set_ylabel("deviation [m]")
    else:  # scaling
        for label, path in spec.inputs:
            cols = read_columns(path, SCALING_HEADER)
            values, ms = cols["value"], cols["mean_ms_substep"]
            ax.plot(values, ms, "o", label=label)
            fit = scaling_fit(values, ms)
            info["fit"] = fit
            if not fit["degenerate"]:
                line = [fit["slope"] * x + fit["intercept"] for x in values]
                ax.plot(values, line, "-", linewidth=1.0,
                        label=f"{label} fit (R$^2$={fit['r_squared']:.4f})")
        ax.set_xlabel("element count")
        ax.set_ylabel("mean ms per substep")

    if spec.title:
        ax.set_title(spec.title)
    ax.grid(True, alpha=0.3)
    ax.legend()
    fig.tight_layout()
    out = Path(spec.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(out, dpi=120)
    return fig, info
