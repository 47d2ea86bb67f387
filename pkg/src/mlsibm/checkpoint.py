"""Flat binary checkpoints of the flow state and markers.

Byte layout (all little-endian, no padding):

    offset  size        field
    0       8           magic b"MLSIBMC1"
    8       u32         ndim (2 or 3)
    12      u32         has_body (0 or 1)
    16      f64         time
    24      f64         h
    32      f64         dt_last        (most recent full-step dt; 0 if none)
    40      f64         alpha          (MLS weight scale of the run)
    48      u32         basis          (0 constant, 1 linear)
    52      u32         reserved (0)
    56      u32*ndim    dims           (cells per axis)
    ...     u32*ndim    periodic       (0/1 per axis)
    ...     f64*ndim    origin

    then ndim velocity blocks and one pressure block, each:
        u32*ndim    shape          (interior node counts, no ghosts)
        f64*prod    data           (C order)

    if has_body:
        u32         n_markers
        f64*(n*ndim)  reference positions X0
        f64*(n*ndim)  current positions X
        f64*n         areas
        f64*(n*ndim)  normals
        f64*(n*ndim)  desired velocities

Velocity blocks store the interior face lattice including boundary faces
(counts from the staggered layout); ghosts are rebuilt on load.
"""

import struct
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .grid import build_grid
from .solver import FlowState
from .surface import MarkerSet

MAGIC = b"MLSIBMC1"


def save_checkpoint(path, state, dt_last=0.0, alpha=2.0 / 3.0, basis="linear",
                    markers=None):
    grid = state.grid
    nd = grid.ndim
    parts = [MAGIC]
    parts.append(struct.pack("<II", nd, 1 if markers is not None else 0))
    parts.append(struct.pack("<dddd", state.t, grid.h, dt_last, alpha))
    parts.append(struct.pack("<II", 1 if basis == "linear" else 0, 0))
    parts.append(np.asarray(grid.dims, dtype="<u4").tobytes())
    parts.append(np.asarray(grid.periodic, dtype="<u4").tobytes())
    parts.append(np.asarray(grid.origin, dtype="<f8").tobytes())
    for c in range(nd):
        arr = state.u[c][state.interior(c)]
        parts.append(np.asarray(arr.shape, dtype="<u4").tobytes())
        parts.append(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    pin = state.p_interior
    parts.append(np.asarray(pin.shape, dtype="<u4").tobytes())
    parts.append(np.ascontiguousarray(pin, dtype="<f8").tobytes())
    if markers is not None:
        parts.append(struct.pack("<I", markers.count))
        for arr in (markers.X0, markers.X, markers.area, markers.normal,
                    markers.U_desired):
            parts.append(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    with open(path, "wb") as fh:
        fh.write(b"".join(parts))


@dataclass
class Checkpoint:
    grid: object
    state: FlowState
    markers: MarkerSet | None
    dt_last: float
    alpha: float
    basis: str


class _Reader:
    def __init__(self, buf, path):
        self.buf = buf
        self.path = path
        self.pos = 0

    def take(self, n):
        if self.pos + n > len(self.buf):
            raise ConfigError(
                f"truncated checkpoint {self.path}: wanted {n} bytes at "
                f"offset {self.pos}, file has {len(self.buf)}")
        out = self.buf[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def array(self, dtype, count):
        dt = np.dtype(dtype)
        return np.frombuffer(self.take(dt.itemsize * count), dtype=dt).copy()


def load_checkpoint(path):
    with open(path, "rb") as fh:
        buf = fh.read()
    r = _Reader(buf, path)
    if r.take(len(MAGIC)) != MAGIC:
        raise ConfigError(f"{path} is not a checkpoint (bad magic)")
    nd, has_body = r.unpack("<II")
    if nd not in (2, 3):
        raise ConfigError(f"checkpoint ndim {nd} unsupported")
    t, h, dt_last, alpha = r.unpack("<dddd")
    basis_flag, _ = r.unpack("<II")
    dims = r.array("<u4", nd).astype(int)
    periodic = r.array("<u4", nd).astype(bool)
    origin = r.array("<f8", nd)
    grid = build_grid(dims, h, origin=origin, periodic=periodic)
    state = FlowState.zeros(grid)
    state.t = t
    for c in range(nd):
        shape = tuple(r.array("<u4", nd).astype(int))
        expect = tuple(int(x) for x in grid.lattice(c).counts)
        if shape != expect:
            raise ConfigError(
                f"checkpoint component {c} has shape {shape}, grid wants {expect}")
        state.u[c][state.interior(c)] = r.array("<f8", int(np.prod(shape))).reshape(shape)
    shape = tuple(r.array("<u4", nd).astype(int))
    if shape != tuple(grid.dims):
        raise ConfigError(f"checkpoint pressure shape {shape} != dims {tuple(grid.dims)}")
    state.p[tuple(slice(1, -1) for _ in range(nd))] = \
        r.array("<f8", int(np.prod(shape))).reshape(shape)
    markers = None
    if has_body:
        (n,) = r.unpack("<I")
        X0 = r.array("<f8", n * nd).reshape(n, nd)
        X = r.array("<f8", n * nd).reshape(n, nd)
        area = r.array("<f8", n)
        normal = r.array("<f8", n * nd).reshape(n, nd)
        ud = r.array("<f8", n * nd).reshape(n, nd)
        markers = MarkerSet(X0, area, normal)
        markers.X[:] = X
        markers.U_desired[:] = ud
        markers.t = t
    if r.pos != len(buf):
        raise ConfigError(f"{len(buf) - r.pos} trailing bytes in {path}")
    return Checkpoint(grid, state, markers,
                      dt_last, alpha, "linear" if basis_flag else "constant")
