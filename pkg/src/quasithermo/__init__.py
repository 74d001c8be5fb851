"""Quasithermodynamic fluctuation machinery: charts, series transfer, transport, Wigner and Fock kinetics."""

from . import asymptotics, cumulants, evolution, fields, manifold, series, thermofock, wigner
from .errors import ConfigError, NumericalFailure, QuasithermoError
from .fields import Grid, StateField

__version__ = "0.1.0"

__all__ = [
    "asymptotics",
    "cumulants",
    "evolution",
    "fields",
    "manifold",
    "series",
    "thermofock",
    "wigner",
    "Grid",
    "StateField",
    "ConfigError",
    "NumericalFailure",
    "QuasithermoError",
    "__version__",
]
