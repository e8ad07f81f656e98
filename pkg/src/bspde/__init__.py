"""Forward/backward parabolic Ito equations on a scenario tree.

Finite differences in space (Dirichlet interval), Rademacher scenario tree
in time, exact discrete adjoints.
"""

from bspde.errors import (
    BSPDEError,
    CoercivityError,
    ConfigurationError,
    DataError,
    NumericalError,
    ResourceError,
    StructuralError,
)
from bspde.grid_ops import CoefficientSet, SpatialGrid
from bspde.time_noise import AdaptedField, ScenarioTree, TimeGrid, build_tree

__version__ = "0.1.0"

__all__ = [
    "AdaptedField",
    "BSPDEError",
    "CoefficientSet",
    "CoercivityError",
    "ConfigurationError",
    "DataError",
    "NumericalError",
    "ResourceError",
    "ScenarioTree",
    "SpatialGrid",
    "StructuralError",
    "TimeGrid",
    "build_tree",
]
