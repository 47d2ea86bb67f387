"""Exception hierarchy.

Two broad families matter to callers: configuration problems (bad input,
rejected before any time stepping) and numerical failures (detected while
stepping).  The CLI maps them to exit codes 2 and 3.
"""


class MlsIbmError(Exception):
    """Base class for everything raised deliberately by this package."""


class ConfigError(MlsIbmError):
    """Invalid configuration, case setup, or input file."""


class StlParseError(ConfigError):
    """Malformed STL payload; message carries the byte/line offset."""


class NumericalError(MlsIbmError):
    """Numerical failure while building operators or time stepping."""


class StencilTruncationError(NumericalError):
    """Marker sits within the interpolation support of a non-periodic face."""


class DegenerateStencilError(NumericalError):
    """All stencil weights underflowed; no shape vector exists at this point."""


class StaleOperatorError(NumericalError):
    """Transfer operator applied after markers moved beyond its rebuild tolerance."""


class DivergedError(NumericalError):
    """Velocity magnitude or residual exceeded the divergence guard."""


class PoissonError(NumericalError):
    """Pressure solve failed to converge to tolerance."""
