"""Backend parity (numba vs numpy) and small oracles for the array kernels."""

import numpy as np
import pytest
import scipy.linalg

from mlsibm.grid import build_grid
from mlsibm.kernels import numpy_backend as knp

numba = pytest.importorskip("numba")
from mlsibm.kernels import numba_backend as knb  # noqa: E402


def wrap_ghosts(q):
    """Fill one-cell periodic ghosts along every axis."""
    for ax in range(q.ndim):
        src_lo = [slice(None)] * q.ndim
        src_hi = [slice(None)] * q.ndim
        dst_lo = [slice(None)] * q.ndim
        dst_hi = [slice(None)] * q.ndim
        dst_lo[ax] = 0
        src_lo[ax] = -2
        dst_hi[ax] = -1
        src_hi[ax] = 1
        q[tuple(dst_lo)] = q[tuple(src_lo)]
        q[tuple(dst_hi)] = q[tuple(src_hi)]
    return q


@pytest.fixture
def fields2(rng):
    return [wrap_ghosts(rng.standard_normal((18, 14))) for _ in range(2)]


@pytest.fixture
def fields3(rng):
    return [wrap_ghosts(rng.standard_normal((10, 9, 8))) for _ in range(3)]


def test_mls_build_parity(rng):
    for ndim in (2, 3):
        grid = build_grid((10,) * ndim, 0.4, periodic=(True,) * ndim)
        lat = grid.lattice(0)
        X = rng.uniform(0.5, 3.5, size=(64, ndim))
        build_np = knp.mls_build_2d if ndim == 2 else knp.mls_build_3d
        build_nb = knb.mls_build_2d if ndim == 2 else knb.mls_build_3d
        args = (X, lat.offs, lat.counts, lat.periodic, lat.h, lat.H,
                2.0 / 3.0, 1, 1)
        phi_a, flat_a, nfb_a, _, code_a = build_np(*args)
        phi_b, flat_b, nfb_b, _, code_b = build_nb(*args)
        assert np.array_equal(flat_a, flat_b)
        assert np.max(np.abs(phi_a - phi_b)) < 1e-13
        assert nfb_a == nfb_b and code_a == code_b == 0


def test_interp_spread_parity_and_adjointness(rng):
    grid = build_grid((12, 12), 0.5, periodic=(True, True))
    lat = grid.lattice(1)
    X = rng.uniform(1.0, 5.0, size=(40, 2))
    phi, flat, _, _, _ = knp.mls_build_2d(X, lat.offs, lat.counts,
                                          lat.periodic, lat.h, lat.H,
                                          2.0 / 3.0, 1, 1)
    q = rng.standard_normal(lat.gshape(1))
    F = rng.standard_normal(40)

    got_np = knp.interp_flat(q.ravel(), phi, flat)
    got_nb = knb.interp_flat(q.ravel(), phi, flat)
    assert np.max(np.abs(got_np - got_nb)) < 1e-13

    out_np = np.zeros(q.size)
    out_nb = np.zeros(q.size)
    knp.spread_flat(out_np, phi, flat, F)
    knb.spread_flat(out_nb, phi, flat, F)
    assert np.max(np.abs(out_np - out_nb)) < 1e-13

    # <spread(F), q> == <F, interp(q)> -- the two transfers are transposes
    assert np.isclose(out_np @ q.ravel(), F @ got_np, rtol=1e-13)


def test_finite_difference_parity_2d(fields2):
    u, v = fields2
    h = 0.37
    for name in ("conv_u_2d", "conv_v_2d", "div_2d"):
        a = getattr(knp, name)(u, v, h)
        b = getattr(knb, name)(u, v, h)
        assert np.max(np.abs(a - b)) < 1e-12, name
    a = knp.lap_2d(u, h)
    b = knb.lap_2d(u, h)
    assert np.max(np.abs(a - b)) < 1e-12


def test_finite_difference_parity_3d(fields3):
    u, v, w = fields3
    h = 0.21
    for name in ("conv_u_3d", "conv_v_3d", "conv_w_3d", "div_3d"):
        a = getattr(knp, name)(u, v, w, h)
        b = getattr(knb, name)(u, v, w, h)
        assert np.max(np.abs(a - b)) < 1e-12, name
    a = knp.lap_3d(u, h)
    b = knb.lap_3d(u, h)
    assert np.max(np.abs(a - b)) < 1e-12


def test_divergence_against_naive_loop(rng):
    u = wrap_ghosts(rng.standard_normal((9, 7)))
    v = wrap_ghosts(rng.standard_normal((9, 7)))
    h = 0.5
    got = knp.div_2d(u, v, h)
    nx, ny = 7, 5
    want = np.zeros((nx, ny))
    for i in range(nx):
        for j in range(ny):
            want[i, j] = (u[i + 2, j + 1] - u[i + 1, j + 1]
                          + v[i + 1, j + 2] - v[i + 1, j + 1]) / h
    assert np.allclose(got, want, atol=1e-14)


def test_laplacian_against_naive_loop(rng):
    q = rng.standard_normal((8, 6))
    h = 0.25
    got = knp.lap_2d(q, h)
    for i in range(1, 7):
        for j in range(1, 5):
            want = (q[i + 1, j] + q[i - 1, j] + q[i, j + 1] + q[i, j - 1]
                    - 4 * q[i, j]) / h**2
            assert abs(got[i, j] - want) < 1e-13


def test_convection_conserves_on_periodic_box(fields2):
    # divergence (flux) form: interior fluxes telescope to zero over a
    # periodic box, and a uniform stream produces no convective tendency
    u, v = fields2
    h = 1.0 / 16.0
    assert abs(np.sum(knp.conv_u_2d(u, v, h)[1:-1, 1:-1])) < 1e-10
    assert abs(np.sum(knp.conv_v_2d(u, v, h)[1:-1, 1:-1])) < 1e-10
    uu = np.full_like(u, 1.7)
    vv = np.full_like(v, -0.4)
    assert np.max(np.abs(knp.conv_u_2d(uu, vv, h))) == 0.0
    assert np.max(np.abs(knp.conv_v_2d(uu, vv, h))) == 0.0


def test_thomas_batch_against_scipy(rng):
    n, P = 24, 7
    dl = rng.standard_normal(n)
    du = rng.standard_normal(n)
    dd = rng.standard_normal(n) + 6.0
    rhs = rng.standard_normal((P, n))
    got = knp.thomas_batch(dl, dd, du, rhs)
    got_nb = knb.thomas_batch(dl, dd, du, rhs)
    ab = np.zeros((3, n))
    ab[0, 1:] = du[:-1]
    ab[1] = dd
    ab[2, :-1] = dl[1:]
    for p in range(P):
        want = scipy.linalg.solve_banded((1, 1), ab, rhs[p])
        assert np.allclose(got[p], want, atol=1e-11)
    assert np.max(np.abs(got - got_nb)) < 1e-12


def test_tridiag_const_against_dense(rng):
    n, P = 16, 5
    a, b, c = -1.0, 2.4, -1.1
    rhs = rng.standard_normal((P, n))
    A = np.diag(np.full(n, b)) + np.diag(np.full(n - 1, a), -1) \
        + np.diag(np.full(n - 1, c), 1)
    got = knp.tridiag_const(a, b, c, rhs)
    got_nb = knb.tridiag_const(a, b, c, rhs)
    want = np.linalg.solve(A, rhs.T).T
    assert np.allclose(got, want, atol=1e-11)
    assert np.max(np.abs(got - got_nb)) < 1e-12


def test_cyclic_tridiag_against_dense(rng):
    n, P = 12, 4
    a, b, c = -0.9, 2.7, -1.2
    rhs = rng.standard_normal((P, n))
    A = np.diag(np.full(n, b)) + np.diag(np.full(n - 1, a), -1) \
        + np.diag(np.full(n - 1, c), 1)
    A[0, -1] = a
    A[-1, 0] = c
    got = knp.cyclic_tridiag_const(a, b, c, rhs)
    got_nb = knb.cyclic_tridiag_const(a, b, c, rhs)
    want = np.linalg.solve(A, rhs.T).T
    assert np.allclose(got, want, atol=1e-11)
    assert np.max(np.abs(got - got_nb)) < 1e-11


def test_thomas_spectral_against_dense(rng):
    n, P = 10, 6
    dl = np.full(n, 1.0)
    du = np.full(n, 1.0)
    dd = np.full(n, -2.0)
    lam = rng.uniform(0.5, 3.0, P)
    lam[2] = 0.0
    rhs = rng.standard_normal((P, n)) + 1j * rng.standard_normal((P, n))
    got = knp.thomas_spectral(dl, dd, du, lam, rhs, pin_index=2)
    got_nb = knb.thomas_spectral(dl, dd, du, lam, rhs, pin_index=2)
    base = np.diag(dd) + np.diag(dl[1:], -1) + np.diag(du[:-1], 1)
    for p in range(P):
        A = (base + lam[p] * np.eye(n)).astype(complex)
        r = rhs[p].copy()
        if p == 2:
            A[0] = 0.0
            A[0, 0] = 1.0
            r[0] = 0.0
        want = np.linalg.solve(A, r)
        assert np.allclose(got[p], want, atol=1e-10)
    assert np.max(np.abs(got - got_nb)) < 1e-11
