"""Figure rendering for pondlab CSV artifacts.

This package consumes only the files the simulation CLI writes (the
schema-tagged experiment CSVs and the step-trace export) and draws the
estimate and confidence columns as they are; no statistic is ever
recomputed here.
"""

__version__ = "0.1.0"

from .figures import FigureSpec, SpecError, load_spec, render
from .io import NoDataRows, SchemaMismatch, TableError

__all__ = [
    "FigureSpec",
    "NoDataRows",
    "SchemaMismatch",
    "SpecError",
    "TableError",
    "load_spec",
    "render",
]
