"""Offline figure generation from ftns trajectory CSV files.

Read-only consumer of the documented CSV schema (header row ``t, x1..,
v1.., xi.., y, V1, V2, V3, err_x, err_xi``); never mutates its inputs.
"""

__version__ = "0.1.0"

from .render import FigureSpec, SchemaError, render

__all__ = ["FigureSpec", "SchemaError", "render", "__version__"]
