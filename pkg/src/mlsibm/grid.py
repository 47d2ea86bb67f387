"""Uniform Cartesian staggered grid: lattices, allocation, stencil queries.

Velocity components live on face lattices (one extra node along their own
axis unless that axis is periodic), pressure on cell centers.  Every lattice
is described by the position of its node 0 per axis plus node counts, so the
interpolation stencil machinery is lattice-agnostic.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, StencilTruncationError

SUPPORT_RATIO = 1.5  # H/h; the 3-node-per-axis stencil assumes this value


def stencil_offsets(ndim):
    """Per-axis offsets {-1,0,1} in C order (axis 0 slowest), shape (3^d, d)."""
    grids = np.meshgrid(*([[-1, 0, 1]] * ndim), indexing="ij")
    return np.stack(grids, -1).reshape(-1, ndim).astype(np.int64)


@dataclass(frozen=True)
class Lattice:
    """A rectangular node lattice: node i sits at offs + i*h per axis."""

    offs: np.ndarray
    counts: np.ndarray
    periodic: np.ndarray
    h: float
    H: float

    @property
    def ndim(self):
        return len(self.counts)

    def axis_coords(self, axis):
        return self.offs[axis] + self.h * np.arange(self.counts[axis])

    def gshape(self, gw=1):
        return tuple(int(c) + 2 * gw for c in self.counts)

    def alloc(self, gw=1):
        return np.zeros(self.gshape(gw))


def make_lattice(offs, counts, periodic, h, H=None):
    offs = np.asarray(offs, dtype=np.float64)
    counts = np.asarray(counts, dtype=np.int64)
    periodic = np.asarray(periodic, dtype=np.bool_)
    return Lattice(offs, counts, periodic, float(h), float(H if H else SUPPORT_RATIO * h))


class StaggeredGrid:
    """Uniform staggered grid over a box of ``dims`` cells of spacing ``h``."""

    def __init__(self, dims, h, origin=None, periodic=None, support_radius=None):
        dims = tuple(int(n) for n in dims)
        ndim = len(dims)
        if ndim not in (2, 3):
            raise ConfigError(f"grid must be 2D or 3D, got {ndim} dims")
        if any(n < 4 for n in dims):
            raise ConfigError(f"every grid direction needs >= 4 cells, got {dims}")
        h = float(h)
        if not np.isfinite(h) or h <= 0.0:
            raise ConfigError(f"grid spacing must be positive, got {h}")
        if origin is None:
            origin = (0.0,) * ndim
        origin = tuple(float(x) for x in origin)
        if len(origin) != ndim:
            raise ConfigError("origin length does not match dims")
        if periodic is None:
            periodic = (False,) * ndim
        periodic = tuple(bool(b) for b in periodic)
        if len(periodic) != ndim:
            raise ConfigError("periodic flags length does not match dims")
        H = SUPPORT_RATIO * h if support_radius is None else float(support_radius)
        if abs(H - SUPPORT_RATIO * h) > 1e-12 * h:
            raise ConfigError(
                "only the standard support radius H=1.5h is supported; "
                f"got H={H} for h={h}"
            )
        self.dims = dims
        self.h = h
        self.origin = origin
        self.periodic = periodic
        self.H = H
        self.lengths = tuple(n * h for n in dims)
        self.cell_volume = h**ndim

    @property
    def ndim(self):
        return len(self.dims)

    def _counts_for(self, which):
        nd = self.ndim
        if which == "cell":
            return self.dims
        if which == "vertex":
            return tuple(
                self.dims[a] + (0 if self.periodic[a] else 1) for a in range(nd)
            )
        c = int(which)
        if not 0 <= c < nd:
            raise ConfigError(f"no velocity component {which} on a {nd}D grid")
        return tuple(
            self.dims[a] + (1 if (a == c and not self.periodic[a]) else 0)
            for a in range(nd)
        )

    def lattice(self, which):
        """Node lattice for ``which``: a component index, 'cell', or 'vertex'."""
        nd = self.ndim
        if which == "cell":
            offs = [self.origin[a] + 0.5 * self.h for a in range(nd)]
        elif which == "vertex":
            offs = list(self.origin)
        else:
            c = int(which)
            offs = [
                self.origin[a] + (0.0 if a == c else 0.5 * self.h) for a in range(nd)
            ]
        return make_lattice(offs, self._counts_for(which), self.periodic, self.h, self.H)

    def alloc(self, which, gw=1):
        return self.lattice(which).alloc(gw)


def build_grid(dims, h, origin=None, periodic=None, support_radius=None):
    """Validating constructor (see StaggeredGrid for parameter meaning)."""
    return StaggeredGrid(dims, h, origin=origin, periodic=periodic,
                         support_radius=support_radius)


def stencil_for(X, component, grid):
    """Stencil nodes serving marker ``X`` for one velocity component.

    Returns ``(indices, positions)`` where ``indices`` (3^d, d) are wrapped
    lattice indices and ``positions`` (3^d, d) the unwrapped node coordinates
    (within H of X per axis even across periodic seams).  Raises
    StencilTruncationError when the stencil would leave a non-periodic face.
    """
    lat = grid.lattice(component)
    X = np.asarray(X, dtype=np.float64)
    t = (X - lat.offs) / lat.h
    i0 = np.floor(t + 0.5).astype(np.int64)
    J = i0[None, :] + stencil_offsets(lat.ndim)
    pos = lat.offs + J * lat.h
    Jw = J.copy()
    for a in range(lat.ndim):
        if lat.periodic[a]:
            Jw[:, a] %= lat.counts[a]
        else:
            oob = (J[:, a] < 0) | (J[:, a] >= lat.counts[a])
            if oob.any():
                raise StencilTruncationError(
                    f"marker at {X.tolist()} is within the support radius "
                    f"H={lat.H} of a non-periodic face along axis {a}"
                )
    return Jw, pos
