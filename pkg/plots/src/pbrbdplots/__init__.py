"""Figure rendering for benchmark metrics CSVs."""

from .render import PlotSpec, SchemaError, render, scaling_fit

__version__ = "0.1.0"

__all__ = ["PlotSpec", "SchemaError", "render", "scaling_fit"]
