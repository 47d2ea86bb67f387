"""Pure-numpy reference implementations of the hot kernels.

Every public function here has an identically-named, identically-shaped twin
in :mod:`mlsibm.kernels.numba_backend`; the package picks one family at import
time (see ``kernels/__init__``).  Keep the two files in lock-step.

Array conventions:

* ghosted fields are C-contiguous with one ghost layer per side; kernels that
  take ``gw`` (ghost width) compute flat indices into the raveled ghosted
  array so spreads write straight through views.
* MLS stencils are the 3-per-axis node box around the nearest lattice node,
  columns ordered C-style (axis 0 slowest).
"""

import numpy as np

_OFF2 = np.stack(np.meshgrid([-1, 0, 1], [-1, 0, 1], indexing="ij"), -1).reshape(-1, 2)
_OFF3 = np.stack(
    np.meshgrid([-1, 0, 1], [-1, 0, 1], [-1, 0, 1], indexing="ij"), -1
).reshape(-1, 3)

# condition proxy for the MLS moment matrix: Cholesky diag ratio squared
_COND_LIMIT = 1e-12


def _mls_build(X, offs, counts, periodic, h, H, alpha, linear, gw, OFF):
    NL, nd = X.shape
    S = OFF.shape[0]
    phi = np.zeros((NL, S))
    flat = np.zeros((NL, S), dtype=np.int64)
    if NL == 0:
        return phi, flat, 0, -1, 0

    t = (X - offs[None, :]) / h
    i0 = np.floor(t + 0.5).astype(np.int64)
    J = i0[:, None, :] + OFF[None, :, :]          # unwrapped node indices
    pos = offs[None, None, :] + J * h
    Jw = J.copy()
    bad = -1
    badcode = 0
    for a in range(nd):
        if periodic[a]:
            Jw[:, :, a] %= counts[a]
        else:
            oob = (Jw[:, :, a] < 0) | (Jw[:, :, a] >= counts[a])
            if oob.any():
                rows = np.nonzero(oob.any(axis=1))[0]
                if bad < 0:
                    bad, badcode = int(rows[0]), 1
                np.clip(Jw[:, :, a], 0, counts[a] - 1, out=Jw[:, :, a])

    stride = np.empty(nd, dtype=np.int64)
    stride[-1] = 1
    for a in range(nd - 2, -1, -1):
        stride[a] = stride[a + 1] * (counts[a + 1] + 2 * gw)
    flat[:] = ((Jw + gw) * stride[None, None, :]).sum(axis=2)

    loc = (pos - X[:, None, :]) / H               # stencil offsets in units of H
    W = np.exp(-(loc**2).sum(axis=2) / (alpha * alpha))
    sw = W.sum(axis=1)
    degen = sw <= 0.0
    if degen.any() and badcode != 1:
        bad, badcode = int(np.nonzero(degen)[0][0]), 2
    sw_safe = np.where(degen, 1.0, sw)
    shep = W / sw_safe[:, None]

    nfallback = 0
    if not linear:
        phi[:] = shep
    else:
        if nd == 2:
            phi[:], nfb = _solve_linear_2d(W, loc, shep)
        else:
            phi[:], nfb = _solve_linear_3d(W, loc, shep)
        nfallback = int(nfb) - int(degen.sum())   # degenerate rows are errors, not fallbacks

    if badcode:
        sel = degen if badcode == 2 else np.zeros(NL, bool)
        phi[sel] = 0.0
    return phi, flat, nfallback, bad, badcode


def _solve_linear_2d(W, loc, shep):
    lx, ly = loc[:, :, 0], loc[:, :, 1]
    a00 = W.sum(1)
    a01 = (W * lx).sum(1)
    a02 = (W * ly).sum(1)
    a11 = (W * lx * lx).sum(1)
    a12 = (W * lx * ly).sum(1)
    a22 = (W * ly * ly).sum(1)
    with np.errstate(divide="ignore", invalid="ignore"):
        l00 = np.sqrt(a00)
        l10 = a01 / l00
        l20 = a02 / l00
        q11 = a11 - l10 * l10
        l11 = np.sqrt(q11)
        l21 = (a12 - l10 * l20) / l11
        q22 = a22 - l20 * l20 - l21 * l21
        l22 = np.sqrt(q22)
        dmin = np.minimum(np.minimum(a00, q11), q22)
        dmax = np.maximum(np.maximum(a00, q11), q22)
        ok = (dmin > 0.0) & (dmin > _COND_LIMIT * dmax)
        z0 = 1.0 / l00
        z1 = -l10 * z0 / l11
        z2 = -(l20 * z0 + l21 * z1) / l22
        y2 = z2 / l22
        y1 = (z1 - l21 * y2) / l11
        y0 = (z0 - l10 * y1 - l20 * y2) / l00
        out = W * (y0[:, None] + y1[:, None] * lx + y2[:, None] * ly)
    ok &= np.isfinite(out).all(axis=1)
    out = np.where(ok[:, None], out, shep)
    return out, (~ok).sum()


def _solve_linear_3d(W, loc, shep):
    lx, ly, lz = loc[:, :, 0], loc[:, :, 1], loc[:, :, 2]
    a00 = W.sum(1)
    a01 = (W * lx).sum(1)
    a02 = (W * ly).sum(1)
    a03 = (W * lz).sum(1)
    a11 = (W * lx * lx).sum(1)
    a12 = (W * lx * ly).sum(1)
    a13 = (W * lx * lz).sum(1)
    a22 = (W * ly * ly).sum(1)
    a23 = (W * ly * lz).sum(1)
    a33 = (W * lz * lz).sum(1)
    with np.errstate(divide="ignore", invalid="ignore"):
        l00 = np.sqrt(a00)
        l10 = a01 / l00
        l20 = a02 / l00
        l30 = a03 / l00
        q11 = a11 - l10 * l10
        l11 = np.sqrt(q11)
        l21 = (a12 - l20 * l10) / l11
        l31 = (a13 - l30 * l10) / l11
        q22 = a22 - l20 * l20 - l21 * l21
        l22 = np.sqrt(q22)
        l32 = (a23 - l30 * l20 - l31 * l21) / l22
        q33 = a33 - l30 * l30 - l31 * l31 - l32 * l32
        l33 = np.sqrt(q33)
        dmin = np.minimum(np.minimum(a00, q11), np.minimum(q22, q33))
        dmax = np.maximum(np.maximum(a00, q11), np.maximum(q22, q33))
        ok = (dmin > 0.0) & (dmin > _COND_LIMIT * dmax)
        z0 = 1.0 / l00
        z1 = -l10 * z0 / l11
        z2 = -(l20 * z0 + l21 * z1) / l22
        z3 = -(l30 * z0 + l31 * z1 + l32 * z2) / l33
        y3 = z3 / l33
        y2 = (z2 - l32 * y3) / l22
        y1 = (z1 - l21 * y2 - l31 * y3) / l11
        y0 = (z0 - l10 * y1 - l20 * y2 - l30 * y3) / l00
        out = W * (
            y0[:, None] + y1[:, None] * lx + y2[:, None] * ly + y3[:, None] * lz
        )
    ok &= np.isfinite(out).all(axis=1)
    out = np.where(ok[:, None], out, shep)
    return out, (~ok).sum()


def mls_build_2d(X, offs, counts, periodic, h, H, alpha, linear, gw):
    return _mls_build(X, offs, counts, periodic, h, H, alpha, linear, gw, _OFF2)


def mls_build_3d(X, offs, counts, periodic, h, H, alpha, linear, gw):
    return _mls_build(X, offs, counts, periodic, h, H, alpha, linear, gw, _OFF3)


def interp_flat(qflat, phi, flat):
    return (qflat[flat] * phi).sum(axis=1)


def spread_flat(qflat, phi, flat, src):
    np.add.at(qflat, flat, phi * src[:, None])


# ---------------------------------------------------------------------------
# staggered-grid finite differences (ghosted arrays, interior computed)
# ---------------------------------------------------------------------------


def conv_u_2d(u, v, h):
    m0, m1 = u.shape
    out = np.zeros_like(u)
    uc = u[1 : m0 - 1, 1 : m1 - 1]
    ue = 0.5 * (uc + u[2:m0, 1 : m1 - 1])
    uw = 0.5 * (u[0 : m0 - 2, 1 : m1 - 1] + uc)
    un = 0.5 * (uc + u[1 : m0 - 1, 2:m1])
    us = 0.5 * (u[1 : m0 - 1, 0 : m1 - 2] + uc)
    vn = 0.5 * (v[0 : m0 - 2, 2:m1] + v[1 : m0 - 1, 2:m1])
    vs = 0.5 * (v[0 : m0 - 2, 1 : m1 - 1] + v[1 : m0 - 1, 1 : m1 - 1])
    out[1 : m0 - 1, 1 : m1 - 1] = -(ue * ue - uw * uw) / h - (un * vn - us * vs) / h
    return out


def conv_v_2d(u, v, h):
    m0, m1 = v.shape
    out = np.zeros_like(v)
    vc = v[1 : m0 - 1, 1 : m1 - 1]
    vn = 0.5 * (vc + v[1 : m0 - 1, 2:m1])
    vs = 0.5 * (v[1 : m0 - 1, 0 : m1 - 2] + vc)
    ve = 0.5 * (vc + v[2:m0, 1 : m1 - 1])
    vw = 0.5 * (v[0 : m0 - 2, 1 : m1 - 1] + vc)
    ue = 0.5 * (u[2:m0, 0 : m1 - 2] + u[2:m0, 1 : m1 - 1])
    uw = 0.5 * (u[1 : m0 - 1, 0 : m1 - 2] + u[1 : m0 - 1, 1 : m1 - 1])
    out[1 : m0 - 1, 1 : m1 - 1] = -(vn * vn - vs * vs) / h - (ve * ue - vw * uw) / h
    return out


def conv_u_3d(u, v, w, h):
    m0, m1, m2 = u.shape
    out = np.zeros_like(u)
    c = np.s_[1 : m0 - 1, 1 : m1 - 1, 1 : m2 - 1]
    uc = u[c]
    ue = 0.5 * (uc + u[2:m0, 1 : m1 - 1, 1 : m2 - 1])
    uw = 0.5 * (u[0 : m0 - 2, 1 : m1 - 1, 1 : m2 - 1] + uc)
    un = 0.5 * (uc + u[1 : m0 - 1, 2:m1, 1 : m2 - 1])
    us = 0.5 * (u[1 : m0 - 1, 0 : m1 - 2, 1 : m2 - 1] + uc)
    ut = 0.5 * (uc + u[1 : m0 - 1, 1 : m1 - 1, 2:m2])
    ub = 0.5 * (u[1 : m0 - 1, 1 : m1 - 1, 0 : m2 - 2] + uc)
    vn = 0.5 * (v[0 : m0 - 2, 2:m1, 1 : m2 - 1] + v[1 : m0 - 1, 2:m1, 1 : m2 - 1])
    vs = 0.5 * (
        v[0 : m0 - 2, 1 : m1 - 1, 1 : m2 - 1] + v[1 : m0 - 1, 1 : m1 - 1, 1 : m2 - 1]
    )
    wt = 0.5 * (w[0 : m0 - 2, 1 : m1 - 1, 2:m2] + w[1 : m0 - 1, 1 : m1 - 1, 2:m2])
    wb = 0.5 * (
        w[0 : m0 - 2, 1 : m1 - 1, 1 : m2 - 1] + w[1 : m0 - 1, 1 : m1 - 1, 1 : m2 - 1]
    )
    out[c] = (
        -(ue * ue - uw * uw) / h - (un * vn - us * vs) / h - (ut * wt - ub * wb) / h
    )
    return out


def conv_v_3d(u, v, w, h):
    m0, m1, m2 = v.shape
    out = np.zeros_like(v)
    c = np.s_[1 : m0 - 1, 1 : m1 - 1, 1 : m2 - 1]
    vc = v[c]
    vn = 0.5 * (vc + v[1 : m0 - 1, 2:m1, 1 : m2 - 1])
    vs = 0.5 * (v[1 : m0 - 1, 0 : m1 - 2, 1 : m2 - 1] + vc)
    ve = 0.5 * (vc + v[2:m0, 1 : m1 - 1, 1 : m2 - 1])
    vw = 0.5 * (v[0 : m0 - 2, 1 : m1 - 1, 1 : m2 - 1] + vc)
    vt = 0.5 * (vc + v[1 : m0 - 1, 1 : m1 - 1, 2:m2])
    vb = 0.5 * (v[1 : m0 - 1, 1 : m1 - 1, 0 : m2 - 2] + vc)
    ue = 0.5 * (u[2:m0, 0 : m1 - 2, 1 : m2 - 1] + u[2:m0, 1 : m1 - 1, 1 : m2 - 1])
    uw = 0.5 * (
        u[1 : m0 - 1, 0 : m1 - 2, 1 : m2 - 1] + u[1 : m0 - 1, 1 : m1 - 1, 1 : m2 - 1]
    )
    wt = 0.5 * (w[1 : m0 - 1, 0 : m1 - 2, 2:m2] + w[1 : m0 - 1, 1 : m1 - 1, 2:m2])
    wb = 0.5 * (
        w[1 : m0 - 1, 0 : m1 - 2, 1 : m2 - 1] + w[1 : m0 - 1, 1 : m1 - 1, 1 : m2 - 1]
    )
    out[c] = (
        -(vn * vn - vs * vs) / h - (ve * ue - vw * uw) / h - (vt * wt - vb * wb) / h
    )
    return out


def conv_w_3d(u, v, w, h):
    m0, m1, m2 = w.shape
    out = np.zeros_like(w)
    c = np.s_[1 : m0 - 1, 1 : m1 - 1, 1 : m2 - 1]
    wc = w[c]
    wt = 0.5 * (wc + w[1 : m0 - 1, 1 : m1 - 1, 2:m2])
    wb = 0.5 * (w[1 : m0 - 1, 1 : m1 - 1, 0 : m2 - 2] + wc)
    we = 0.5 * (wc + w[2:m0, 1 : m1 - 1, 1 : m2 - 1])
    ww = 0.5 * (w[0 : m0 - 2, 1 : m1 - 1, 1 : m2 - 1] + wc)
    wn = 0.5 * (wc + w[1 : m0 - 1, 2:m1, 1 : m2 - 1])
    ws = 0.5 * (w[1 : m0 - 1, 0 : m1 - 2, 1 : m2 - 1] + wc)
    ue = 0.5 * (u[2:m0, 1 : m1 - 1, 0 : m2 - 2] + u[2:m0, 1 : m1 - 1, 1 : m2 - 1])
    uw = 0.5 * (
        u[1 : m0 - 1, 1 : m1 - 1, 0 : m2 - 2] + u[1 : m0 - 1, 1 : m1 - 1, 1 : m2 - 1]
    )
    vn = 0.5 * (v[1 : m0 - 1, 2:m1, 0 : m2 - 2] + v[1 : m0 - 1, 2:m1, 1 : m2 - 1])
    vs = 0.5 * (
        v[1 : m0 - 1, 1 : m1 - 1, 0 : m2 - 2] + v[1 : m0 - 1, 1 : m1 - 1, 1 : m2 - 1]
    )
    out[c] = (
        -(we * ue - ww * uw) / h - (wn * vn - ws * vs) / h - (wt * wt - wb * wb) / h
    )
    return out


def lap_2d(q, h):
    m0, m1 = q.shape
    out = np.zeros_like(q)
    out[1 : m0 - 1, 1 : m1 - 1] = (
        q[2:m0, 1 : m1 - 1]
        + q[0 : m0 - 2, 1 : m1 - 1]
        + q[1 : m0 - 1, 2:m1]
        + q[1 : m0 - 1, 0 : m1 - 2]
        - 4.0 * q[1 : m0 - 1, 1 : m1 - 1]
    ) / (h * h)
    return out


def lap_3d(q, h):
    m0, m1, m2 = q.shape
    out = np.zeros_like(q)
    out[1 : m0 - 1, 1 : m1 - 1, 1 : m2 - 1] = (
        q[2:m0, 1 : m1 - 1, 1 : m2 - 1]
        + q[0 : m0 - 2, 1 : m1 - 1, 1 : m2 - 1]
        + q[1 : m0 - 1, 2:m1, 1 : m2 - 1]
        + q[1 : m0 - 1, 0 : m1 - 2, 1 : m2 - 1]
        + q[1 : m0 - 1, 1 : m1 - 1, 2:m2]
        + q[1 : m0 - 1, 1 : m1 - 1, 0 : m2 - 2]
        - 6.0 * q[1 : m0 - 1, 1 : m1 - 1, 1 : m2 - 1]
    ) / (h * h)
    return out


def div_2d(u, v, h):
    nx = v.shape[0] - 2
    ny = u.shape[1] - 2
    return (u[2 : nx + 2, 1 : ny + 1] - u[1 : nx + 1, 1 : ny + 1]) / h + (
        v[1 : nx + 1, 2 : ny + 2] - v[1 : nx + 1, 1 : ny + 1]
    ) / h


def div_3d(u, v, w, h):
    nx = v.shape[0] - 2
    ny = w.shape[1] - 2
    nz = u.shape[2] - 2
    return (
        (u[2 : nx + 2, 1 : ny + 1, 1 : nz + 1] - u[1 : nx + 1, 1 : ny + 1, 1 : nz + 1])
        + (v[1 : nx + 1, 2 : ny + 2, 1 : nz + 1] - v[1 : nx + 1, 1 : ny + 1, 1 : nz + 1])
        + (w[1 : nx + 1, 1 : ny + 1, 2 : nz + 2] - w[1 : nx + 1, 1 : ny + 1, 1 : nz + 1])
    ) / h


# ---------------------------------------------------------------------------
# batched tridiagonal solves
# ---------------------------------------------------------------------------


def thomas_spectral(dl, dd, du, lam, rhs, pin_index):
    """Solve (tri(dl,dd,du) + lam[p] I) x = rhs[p] for every pencil p.

    ``rhs`` is (P, n) complex; ``lam`` is (P,) real.  Pencil ``pin_index``
    (if >= 0) has its first row replaced by x[0]=0 to fix the Neumann gauge.
    """
    P, n = rhs.shape
    x = np.empty((P, n), dtype=np.complex128)
    cp = np.empty((P, n))
    dp = np.empty((P, n), dtype=np.complex128)
    b0 = dd[0] + lam
    c0 = np.full(P, du[0]) if n > 1 else np.zeros(P)
    r0 = rhs[:, 0].copy()
    if pin_index >= 0:
        b0 = b0.copy()
        b0[pin_index] = 1.0
        c0[pin_index] = 0.0
        r0[pin_index] = 0.0
    cp[:, 0] = c0 / b0
    dp[:, 0] = r0 / b0
    for i in range(1, n):
        den = (dd[i] + lam) - dl[i] * cp[:, i - 1]
        cp[:, i] = (du[i] if i < n - 1 else 0.0) / den
        dp[:, i] = (rhs[:, i] - dl[i] * dp[:, i - 1]) / den
    x[:, n - 1] = dp[:, n - 1]
    for i in range(n - 2, -1, -1):
        x[:, i] = dp[:, i] - cp[:, i] * x[:, i + 1]
    return x


def thomas_batch(dl, dd, du, rhs):
    """Thomas solve with per-row real coefficients, shared across the batch.

    ``rhs`` is (P, n); ``dl[0]`` and ``du[n-1]`` are ignored.
    """
    P, n = rhs.shape
    x = np.empty_like(rhs)
    cp = np.empty(n)
    dp = np.empty((P, n))
    cp[0] = (du[0] if n > 1 else 0.0) / dd[0]
    dp[:, 0] = rhs[:, 0] / dd[0]
    for i in range(1, n):
        den = dd[i] - dl[i] * cp[i - 1]
        cp[i] = (du[i] if i < n - 1 else 0.0) / den
        dp[:, i] = (rhs[:, i] - dl[i] * dp[:, i - 1]) / den
    x[:, n - 1] = dp[:, n - 1]
    for i in range(n - 2, -1, -1):
        x[:, i] = dp[:, i] - cp[i] * x[:, i + 1]
    return x


def tridiag_const(a, b, c, rhs):
    """Thomas solve of the constant-coefficient system (zero beyond the ends)."""
    P, n = rhs.shape
    x = np.empty_like(rhs)
    cp = np.empty(n)
    dp = np.empty((P, n))
    cp[0] = c / b
    dp[:, 0] = rhs[:, 0] / b
    for i in range(1, n):
        den = b - a * cp[i - 1]
        cp[i] = c / den
        dp[:, i] = (rhs[:, i] - a * dp[:, i - 1]) / den
    x[:, n - 1] = dp[:, n - 1]
    for i in range(n - 2, -1, -1):
        x[:, i] = dp[:, i] - cp[i] * x[:, i + 1]
    return x


def cyclic_tridiag_const(a, b, c, rhs):
    """Sherman-Morrison cyclic Thomas; constant coefficients, n >= 3."""
    P, n = rhs.shape
    gamma = -b
    diag = np.full(n, b)
    diag[0] = b - gamma
    diag[-1] = b - c * a / gamma

    def _solve(r):
        cp = np.empty(n)
        dp = np.empty_like(r)
        cp[0] = c / diag[0]
        dp[..., 0] = r[..., 0] / diag[0]
        for i in range(1, n):
            den = diag[i] - a * cp[i - 1]
            cp[i] = c / den
            dp[..., i] = (r[..., i] - a * dp[..., i - 1]) / den
        out = np.empty_like(r)
        out[..., n - 1] = dp[..., n - 1]
        for i in range(n - 2, -1, -1):
            out[..., i] = dp[..., i] - cp[i] * out[..., i + 1]
        return out

    y = _solve(rhs)
    uvec = np.zeros(n)
    uvec[0] = gamma
    uvec[-1] = c
    z = _solve(uvec)
    vy = y[:, 0] + (a / gamma) * y[:, -1]
    vz = 1.0 + z[0] + (a / gamma) * z[-1]
    return y - np.outer(vy / vz, z)
