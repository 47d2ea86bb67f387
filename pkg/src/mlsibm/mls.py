"""Moving-least-squares shape functions on lattice stencils.

The shape vector for a marker X over its 3^d-node stencil is
Phi^T = p^T(X) A^{-1} B with A = sum_k W_k p(x_k) p(x_k)^T and
B = [W_1 p(x_1), ...], assembled in marker-local coordinates (x - X)/H.
Within the stencil the weight is the pure Gaussian exp[-(r/alpha)^2]; since
the stencil is the tensor-product support, per-axis distances never exceed H
and the weight's r>1 cutoff never triggers there.  The standalone `weight`
helper keeps the cutoff for general r.
"""

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import (
    ConfigError,
    DegenerateStencilError,
    StencilTruncationError,
)
from .grid import stencil_offsets

CONSTANT = "constant"
LINEAR = "linear"
DEFAULT_ALPHA = 2.0 / 3.0


def basis_flag(basis):
    if basis == LINEAR:
        return 1
    if basis == CONSTANT:
        return 0
    raise ConfigError(f"unknown basis {basis!r}; expected 'constant' or 'linear'")


@dataclass(frozen=True)
class WeightParams:
    """Exponential-weight parameters: shape factor alpha and support radius H."""

    alpha: float = DEFAULT_ALPHA
    H: float = 1.5

    def __post_init__(self):
        if not (self.alpha > 0.0 and np.isfinite(self.alpha)):
            raise ConfigError(f"alpha must be positive, got {self.alpha}")
        if not (self.H > 0.0 and np.isfinite(self.H)):
            raise ConfigError(f"support radius must be positive, got {self.H}")


def weight(r, alpha=DEFAULT_ALPHA):
    """Exponential weight exp[-(r/alpha)^2] for r <= 1, hard zero beyond."""
    r = np.asarray(r, dtype=np.float64)
    if np.any(r < 0):
        raise ConfigError("normalized distance r must be >= 0")
    w = np.where(r <= 1.0, np.exp(-((r / alpha) ** 2)), 0.0)
    return float(w) if w.ndim == 0 else w


def shape_matrix(X, lat, alpha=DEFAULT_ALPHA, basis=LINEAR, gw=0):
    """Shape vectors for a batch of markers over one lattice.

    Returns ``(phi, flat, nfallback)`` with ``phi`` (NL, 3^d) weights and
    ``flat`` (NL, 3^d) raveled indices into an array of shape
    ``lat.gshape(gw)``.  Markers whose stencil would cross a non-periodic
    face raise StencilTruncationError; a marker where every weight
    underflows raises DegenerateStencilError.  ``nfallback`` counts markers
    where an ill-conditioned moment matrix forced the constant-basis
    (Shepard) fallback.
    """
    X = np.ascontiguousarray(np.atleast_2d(X), dtype=np.float64)
    if X.shape[1] != lat.ndim:
        raise ConfigError(f"marker dimension {X.shape[1]} != lattice dimension {lat.ndim}")
    if not (0 < alpha <= 2.0):
        raise ConfigError(f"alpha must lie in (0, 2], got {alpha}")
    build = kernels.mls_build_2d if lat.ndim == 2 else kernels.mls_build_3d
    phi, flat, nfallback, bad, badcode = build(
        X, lat.offs, lat.counts, lat.periodic, lat.h, lat.H,
        float(alpha), basis_flag(basis), gw,
    )
    if badcode == 1:
        raise StencilTruncationError(
            f"marker {int(bad)} at {X[int(bad)].tolist()} lies within the "
            f"support radius H={lat.H} of a non-periodic face"
        )
    if badcode == 2:
        raise DegenerateStencilError(
            f"all stencil weights underflowed for marker {int(bad)} at "
            f"{X[int(bad)].tolist()} (alpha={alpha} too small)"
        )
    return phi, flat, int(nfallback)


@dataclass(frozen=True)
class ShapeVector:
    """MLS transfer weights of one marker over its stencil."""

    phi: np.ndarray        # (3^d,)
    nodes: np.ndarray      # (3^d, d) wrapped lattice indices
    positions: np.ndarray  # (3^d, d) unwrapped node coordinates
    fallback: bool         # constant-basis fallback was used


def shape_vector(X, lat, alpha=DEFAULT_ALPHA, basis=LINEAR):
    """Assemble the ShapeVector of a single marker on ``lat``."""
    X = np.asarray(X, dtype=np.float64)
    phi, flat, nfb = shape_matrix(X[None, :], lat, alpha, basis, gw=0)
    nodes = np.stack(np.unravel_index(flat[0], lat.gshape(0)), axis=-1)
    t = (X - lat.offs) / lat.h
    i0 = np.floor(t + 0.5).astype(np.int64)
    pos = lat.offs + (i0 + stencil_offsets(lat.ndim)) * lat.h
    return ShapeVector(phi[0], nodes, pos, nfb > 0)


def verify_transform_invariance(X, lat, basis=LINEAR, alpha=DEFAULT_ALPHA,
                                scale=1.0, shift=None, tol=1e-12):
    """Check Phi(s*x + t) == Phi(x) when H scales with the coordinates.

    The transformed problem uses h' = s*h and H' = s*H so every normalized
    distance r_k is unchanged; the shape vector must then be identical.
    """
    if not scale > 0:
        raise ConfigError("scale must be positive")
    X = np.asarray(X, dtype=np.float64)
    if shift is None:
        shift = np.zeros(lat.ndim)
    shift = np.asarray(shift, dtype=np.float64)
    base = shape_vector(X, lat, alpha, basis).phi
    from .grid import make_lattice

    lat2 = make_lattice(scale * lat.offs + shift, lat.counts, lat.periodic,
                        scale * lat.h, scale * lat.H)
    moved = shape_vector(scale * X + shift, lat2, alpha, basis).phi
    return bool(np.max(np.abs(base - moved)) <= tol)
