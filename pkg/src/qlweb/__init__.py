"""Linearizability of characteristic webs for diagonal quasilinear systems."""

__version__ = "0.1.0"

from .expr import Expression, UnivariateSpec, differentiate, parse, to_string
from .system import QuasilinearSystem, classify
from .connection import build_forms, decouple
from .hopf import Grid, InitialData, pushforward, solve_hopf
from .web import WebSample, henaut_residual, solve_EFGH, straightness

__all__ = [
    "Expression", "UnivariateSpec", "differentiate", "parse", "to_string",
    "QuasilinearSystem", "classify", "build_forms", "decouple",
    "Grid", "InitialData", "pushforward", "solve_hopf",
    "WebSample", "henaut_residual", "solve_EFGH", "straightness",
]
