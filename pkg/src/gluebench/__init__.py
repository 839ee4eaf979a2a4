"""Desk-scale numerics for weighted gluing constructions.

Submodules:

``grid``         staggered grids, regions, fields and discrete operators
``weights``      weight families and cut-off functions
``elliptic``     weighted Poisson solver and Rayleigh-quotient minimization
``maxwell``      gluing of divergence-free vector fields
``constraints``  constraint map, its linearization and adjoint, KID residuals
``scalar_glue``  scalar-curvature interpolation by Picard iteration
``diagnostics``  Beig mass, Schwarzschild data, Poincare and Korn constants
``cli``          command-line front end
"""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    ConfigError,
    DegenerateMass,
    GlueError,
    InputError,
    MetricNotPositive,
    NetSourceMismatch,
    NoConvergence,
    Obstruction,
)
from .grid import Annulus, Box, ConeShell, GridDomain, ScalarField, SymTensorField, VectorField, build_domain  # noqa: E402
from .weights import CutoffSpec, WeightSpec  # noqa: E402

__all__ = [
    "__version__",
    "Annulus",
    "Box",
    "ConeShell",
    "GridDomain",
    "ScalarField",
    "VectorField",
    "SymTensorField",
    "build_domain",
    "WeightSpec",
    "CutoffSpec",
    "GlueError",
    "InputError",
    "ConfigError",
    "Obstruction",
    "NetSourceMismatch",
    "NoConvergence",
    "MetricNotPositive",
    "DegenerateMass",
]
