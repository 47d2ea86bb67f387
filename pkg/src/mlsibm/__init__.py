"""Moving-least-squares immersed-boundary toolkit.

Staggered-grid incompressible flow solver coupled to Lagrangian surface
markers through moving-least-squares transfer operators, with an explicit
one-shot correction of the direct-forcing term.
"""

from .errors import (
    ConfigError,
    DegenerateStencilError,
    DivergedError,
    MlsIbmError,
    NumericalError,
    PoissonError,
    StaleOperatorError,
    StencilTruncationError,
    StlParseError,
)

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "DegenerateStencilError",
    "DivergedError",
    "MlsIbmError",
    "NumericalError",
    "PoissonError",
    "StaleOperatorError",
    "StencilTruncationError",
    "StlParseError",
    "__version__",
]
