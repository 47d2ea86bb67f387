"""Checkpoint binary format: round-trip fidelity and corruption handling."""

import numpy as np
import pytest

from mlsibm.checkpoint import load_checkpoint, save_checkpoint
from mlsibm.errors import ConfigError
from mlsibm.grid import build_grid
from mlsibm.solver import FlowState
from mlsibm.surface import circle_markers


def _random_state(rng, dims=(12, 9), periodic=(True, False)):
    grid = build_grid(dims, 0.25, origin=(0.5, -1.0), periodic=periodic)
    state = FlowState.zeros(grid)
    for c in range(grid.ndim):
        state.u[c][state.interior(c)] = rng.standard_normal(
            state.u[c][state.interior(c)].shape)
    state.p[tuple(slice(1, -1) for _ in range(grid.ndim))] = \
        rng.standard_normal(tuple(grid.dims))
    state.t = 3.75
    return grid, state


def test_round_trip_fluid_only(rng, tmp_path):
    grid, state = _random_state(rng)
    path = tmp_path / "flow.ckpt"
    save_checkpoint(path, state, dt_last=0.0125, alpha=0.6, basis="constant")
    ck = load_checkpoint(path)
    assert ck.state.t == state.t
    assert ck.dt_last == 0.0125
    assert ck.alpha == 0.6
    assert ck.basis == "constant"
    assert tuple(ck.grid.dims) == tuple(grid.dims)
    assert tuple(ck.grid.periodic) == tuple(grid.periodic)
    assert np.allclose(ck.grid.origin, grid.origin)
    for c in range(2):
        assert np.array_equal(ck.state.u[c][ck.state.interior(c)],
                              state.u[c][state.interior(c)])
    assert np.array_equal(ck.state.p_interior, state.p_interior)
    assert ck.markers is None


def test_round_trip_with_markers(rng, tmp_path):
    grid, state = _random_state(rng)
    mk = circle_markers((2.0, 0.5), 0.8, 40)
    mk.X[:] = mk.X0 + 0.1
    mk.U_desired[:] = rng.standard_normal(mk.X.shape)
    path = tmp_path / "body.ckpt"
    save_checkpoint(path, state, markers=mk)
    ck = load_checkpoint(path)
    assert ck.markers.count == 40
    assert np.array_equal(ck.markers.X0, mk.X0)
    assert np.array_equal(ck.markers.X, mk.X)
    assert np.array_equal(ck.markers.area, mk.area)
    assert np.array_equal(ck.markers.normal, mk.normal)
    assert np.array_equal(ck.markers.U_desired, mk.U_desired)


def test_round_trip_3d(rng, tmp_path):
    grid = build_grid((6, 7, 8), 0.5, periodic=(True, True, True))
    state = FlowState.zeros(grid)
    state.u[2][state.interior(2)] = rng.standard_normal(
        state.u[2][state.interior(2)].shape)
    path = tmp_path / "flow3.ckpt"
    save_checkpoint(path, state)
    ck = load_checkpoint(path)
    assert np.array_equal(ck.state.u[2][ck.state.interior(2)],
                          state.u[2][state.interior(2)])


def test_bad_magic(rng, tmp_path):
    path = tmp_path / "junk.ckpt"
    path.write_bytes(b"NOTMYFMT" + b"\x00" * 64)
    with pytest.raises(ConfigError, match="bad magic"):
        load_checkpoint(path)


def test_truncation_detected(rng, tmp_path):
    grid, state = _random_state(rng)
    path = tmp_path / "flow.ckpt"
    save_checkpoint(path, state)
    whole = path.read_bytes()
    for cut in (len(whole) // 3, len(whole) - 5):
        path.write_bytes(whole[:cut])
        with pytest.raises(ConfigError, match="truncated"):
            load_checkpoint(path)


def test_trailing_garbage_detected(rng, tmp_path):
    grid, state = _random_state(rng)
    path = tmp_path / "flow.ckpt"
    save_checkpoint(path, state)
    path.write_bytes(path.read_bytes() + b"\x07\x07")
    with pytest.raises(ConfigError, match="trailing"):
        load_checkpoint(path)


def test_bad_ndim_rejected(rng, tmp_path):
    grid, state = _random_state(rng)
    path = tmp_path / "flow.ckpt"
    save_checkpoint(path, state)
    raw = bytearray(path.read_bytes())
    raw[8] = 7                           # ndim field (first u32 after magic)
    path.write_bytes(bytes(raw))
    with pytest.raises(ConfigError, match="ndim"):
        load_checkpoint(path)
