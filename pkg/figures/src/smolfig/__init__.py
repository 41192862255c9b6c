"""Deterministic figure rendering for smolvel CSV outputs."""

from .render import KINDS, FigureJob, render
from .schema import SchemaError

__version__ = "0.1.0"

__all__ = ["KINDS", "FigureJob", "render", "SchemaError"]
