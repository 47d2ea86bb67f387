"""Backend dispatch for the hot kernels.

The ``MLSIBM_BACKEND`` environment variable picks the implementation at
import time: ``numba`` (default when importable), ``numpy``, or ``auto``.
Both backend modules stay importable directly for benchmarks and parity
tests regardless of which one is active.
"""

import os

from ..errors import ConfigError

_NAMES = [
    "mls_build_2d",
    "mls_build_3d",
    "interp_flat",
    "spread_flat",
    "conv_u_2d",
    "conv_v_2d",
    "conv_u_3d",
    "conv_v_3d",
    "conv_w_3d",
    "lap_2d",
    "lap_3d",
    "div_2d",
    "div_3d",
    "thomas_spectral",
    "thomas_batch",
    "tridiag_const",
    "cyclic_tridiag_const",
]

_requested = os.environ.get("MLSIBM_BACKEND", "auto").strip().lower()

if _requested in ("", "auto"):
    try:
        from . import numba_backend as _impl

        BACKEND = "numba"
    except ImportError:
        from . import numpy_backend as _impl

        BACKEND = "numpy"
elif _requested == "numba":
    from . import numba_backend as _impl

    BACKEND = "numba"
elif _requested == "numpy":
    from . import numpy_backend as _impl

    BACKEND = "numpy"
else:
    raise ConfigError(
        f"unknown MLSIBM_BACKEND={_requested!r}; expected 'numba', 'numpy' or 'auto'"
    )

for _name in _NAMES:
    globals()[_name] = getattr(_impl, _name)

__all__ = _NAMES + ["BACKEND"]
