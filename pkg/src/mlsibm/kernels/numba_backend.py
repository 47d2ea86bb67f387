"""Numba-compiled twins of :mod:`mlsibm.kernels.numpy_backend`.

Loop-form implementations of the same kernels, same signatures, same return
conventions.  Accumulation order differs from numpy's pairwise sums, so the
two backends agree to ~1e-13 relative, not bit-for-bit.
"""

import numpy as np
from numba import njit

_COND_LIMIT = 1e-12


@njit(cache=True)
def mls_build_2d(X, offs, counts, periodic, h, H, alpha, linear, gw):
    NL = X.shape[0]
    phi = np.zeros((NL, 9))
    flat = np.zeros((NL, 9), dtype=np.int64)
    g1 = counts[1] + 2 * gw
    ia2 = 1.0 / (alpha * alpha)
    nfallback = 0
    bad_t = np.int64(-1)
    bad_d = np.int64(-1)
    W = np.empty(9)
    lx = np.empty(9)
    ly = np.empty(9)
    for m in range(NL):
        t0 = (X[m, 0] - offs[0]) / h
        t1 = (X[m, 1] - offs[1]) / h
        i0 = np.int64(np.floor(t0 + 0.5))
        i1 = np.int64(np.floor(t1 + 0.5))
        ok = True
        k = 0
        for d0 in range(-1, 2):
            for d1 in range(-1, 2):
                j0 = i0 + d0
                j1 = i1 + d1
                p0 = offs[0] + j0 * h
                p1 = offs[1] + j1 * h
                if periodic[0]:
                    j0 = j0 % counts[0]
                elif j0 < 0 or j0 >= counts[0]:
                    ok = False
                    j0 = min(max(j0, 0), counts[0] - 1)
                if periodic[1]:
                    j1 = j1 % counts[1]
                elif j1 < 0 or j1 >= counts[1]:
                    ok = False
                    j1 = min(max(j1, 0), counts[1] - 1)
                ax = (p0 - X[m, 0]) / H
                ay = (p1 - X[m, 1]) / H
                lx[k] = ax
                ly[k] = ay
                W[k] = np.exp(-(ax * ax + ay * ay) * ia2)
                flat[m, k] = (j0 + gw) * g1 + (j1 + gw)
                k += 1
        if not ok:
            if bad_t < 0:
                bad_t = np.int64(m)
            continue
        sw = 0.0
        for k in range(9):
            sw += W[k]
        if sw <= 0.0:
            if bad_d < 0:
                bad_d = np.int64(m)
            continue
        if not linear:
            for k in range(9):
                phi[m, k] = W[k] / sw
            continue
        a00 = 0.0
        a01 = 0.0
        a02 = 0.0
        a11 = 0.0
        a12 = 0.0
        a22 = 0.0
        for k in range(9):
            wk = W[k]
            a00 += wk
            a01 += wk * lx[k]
            a02 += wk * ly[k]
            a11 += wk * lx[k] * lx[k]
            a12 += wk * lx[k] * ly[k]
            a22 += wk * ly[k] * ly[k]
        fellback = True
        if a00 > 0.0:
            l00 = np.sqrt(a00)
            l10 = a01 / l00
            l20 = a02 / l00
            q11 = a11 - l10 * l10
            if q11 > 0.0:
                l11 = np.sqrt(q11)
                l21 = (a12 - l10 * l20) / l11
                q22 = a22 - l20 * l20 - l21 * l21
                if q22 > 0.0:
                    dmin = min(a00, min(q11, q22))
                    dmax = max(a00, max(q11, q22))
                    if dmin > _COND_LIMIT * dmax:
                        l22 = np.sqrt(q22)
                        z0 = 1.0 / l00
                        z1 = -l10 * z0 / l11
                        z2 = -(l20 * z0 + l21 * z1) / l22
                        y2 = z2 / l22
                        y1 = (z1 - l21 * y2) / l11
                        y0 = (z0 - l10 * y1 - l20 * y2) / l00
                        allfin = True
                        for k in range(9):
                            val = W[k] * (y0 + y1 * lx[k] + y2 * ly[k])
                            phi[m, k] = val
                            if not np.isfinite(val):
                                allfin = False
                        if allfin:
                            fellback = False
        if fellback:
            nfallback += 1
            for k in range(9):
                phi[m, k] = W[k] / sw
    bad = np.int64(-1)
    badcode = np.int64(0)
    if bad_t >= 0:
        bad = bad_t
        badcode = np.int64(1)
    elif bad_d >= 0:
        bad = bad_d
        badcode = np.int64(2)
    return phi, flat, nfallback, bad, badcode


@njit(cache=True)
def mls_build_3d(X, offs, counts, periodic, h, H, alpha, linear, gw):
    NL = X.shape[0]
    phi = np.zeros((NL, 27))
    flat = np.zeros((NL, 27), dtype=np.int64)
    g1 = counts[1] + 2 * gw
    g2 = counts[2] + 2 * gw
    ia2 = 1.0 / (alpha * alpha)
    nfallback = 0
    bad_t = np.int64(-1)
    bad_d = np.int64(-1)
    W = np.empty(27)
    lx = np.empty(27)
    ly = np.empty(27)
    lz = np.empty(27)
    for m in range(NL):
        t0 = (X[m, 0] - offs[0]) / h
        t1 = (X[m, 1] - offs[1]) / h
        t2 = (X[m, 2] - offs[2]) / h
        i0 = np.int64(np.floor(t0 + 0.5))
        i1 = np.int64(np.floor(t1 + 0.5))
        i2 = np.int64(np.floor(t2 + 0.5))
        ok = True
        k = 0
        for d0 in range(-1, 2):
            for d1 in range(-1, 2):
                for d2 in range(-1, 2):
                    j0 = i0 + d0
                    j1 = i1 + d1
                    j2 = i2 + d2
                    p0 = offs[0] + j0 * h
                    p1 = offs[1] + j1 * h
                    p2 = offs[2] + j2 * h
                    if periodic[0]:
                        j0 = j0 % counts[0]
                    elif j0 < 0 or j0 >= counts[0]:
                        ok = False
                        j0 = min(max(j0, 0), counts[0] - 1)
                    if periodic[1]:
                        j1 = j1 % counts[1]
                    elif j1 < 0 or j1 >= counts[1]:
                        ok = False
                        j1 = min(max(j1, 0), counts[1] - 1)
                    if periodic[2]:
                        j2 = j2 % counts[2]
                    elif j2 < 0 or j2 >= counts[2]:
                        ok = False
                        j2 = min(max(j2, 0), counts[2] - 1)
                    ax = (p0 - X[m, 0]) / H
                    ay = (p1 - X[m, 1]) / H
                    az = (p2 - X[m, 2]) / H
                    lx[k] = ax
                    ly[k] = ay
                    lz[k] = az
                    W[k] = np.exp(-(ax * ax + ay * ay + az * az) * ia2)
                    flat[m, k] = ((j0 + gw) * g1 + (j1 + gw)) * g2 + (j2 + gw)
                    k += 1
        if not ok:
            if bad_t < 0:
                bad_t = np.int64(m)
            continue
        sw = 0.0
        for k in range(27):
            sw += W[k]
        if sw <= 0.0:
            if bad_d < 0:
                bad_d = np.int64(m)
            continue
        if not linear:
            for k in range(27):
                phi[m, k] = W[k] / sw
            continue
        a00 = 0.0
        a01 = 0.0
        a02 = 0.0
        a03 = 0.0
        a11 = 0.0
        a12 = 0.0
        a13 = 0.0
        a22 = 0.0
        a23 = 0.0
        a33 = 0.0
        for k in range(27):
            wk = W[k]
            a00 += wk
            a01 += wk * lx[k]
            a02 += wk * ly[k]
            a03 += wk * lz[k]
            a11 += wk * lx[k] * lx[k]
            a12 += wk * lx[k] * ly[k]
            a13 += wk * lx[k] * lz[k]
            a22 += wk * ly[k] * ly[k]
            a23 += wk * ly[k] * lz[k]
            a33 += wk * lz[k] * lz[k]
        fellback = True
        if a00 > 0.0:
            l00 = np.sqrt(a00)
            l10 = a01 / l00
            l20 = a02 / l00
            l30 = a03 / l00
            q11 = a11 - l10 * l10
            if q11 > 0.0:
                l11 = np.sqrt(q11)
                l21 = (a12 - l20 * l10) / l11
                l31 = (a13 - l30 * l10) / l11
                q22 = a22 - l20 * l20 - l21 * l21
                if q22 > 0.0:
                    l22 = np.sqrt(q22)
                    l32 = (a23 - l30 * l20 - l31 * l21) / l22
                    q33 = a33 - l30 * l30 - l31 * l31 - l32 * l32
                    if q33 > 0.0:
                        dmin = min(min(a00, q11), min(q22, q33))
                        dmax = max(max(a00, q11), max(q22, q33))
                        if dmin > _COND_LIMIT * dmax:
                            l33 = np.sqrt(q33)
                            z0 = 1.0 / l00
                            z1 = -l10 * z0 / l11
                            z2 = -(l20 * z0 + l21 * z1) / l22
                            z3 = -(l30 * z0 + l31 * z1 + l32 * z2) / l33
                            y3 = z3 / l33
                            y2 = (z2 - l32 * y3) / l22
                            y1 = (z1 - l21 * y2 - l31 * y3) / l11
                            y0 = (z0 - l10 * y1 - l20 * y2 - l30 * y3) / l00
                            allfin = True
                            for k in range(27):
                                val = W[k] * (
                                    y0 + y1 * lx[k] + y2 * ly[k] + y3 * lz[k]
                                )
                                phi[m, k] = val
                                if not np.isfinite(val):
                                    allfin = False
                            if allfin:
                                fellback = False
        if fellback:
            nfallback += 1
            for k in range(27):
                phi[m, k] = W[k] / sw
    bad = np.int64(-1)
    badcode = np.int64(0)
    if bad_t >= 0:
        bad = bad_t
        badcode = np.int64(1)
    elif bad_d >= 0:
        bad = bad_d
        badcode = np.int64(2)
    return phi, flat, nfallback, bad, badcode


@njit(cache=True)
def interp_flat(qflat, phi, flat):
    NL, S = phi.shape
    out = np.zeros(NL)
    for m in range(NL):
        acc = 0.0
        for k in range(S):
            acc += qflat[flat[m, k]] * phi[m, k]
        out[m] = acc
    return out


@njit(cache=True)
def spread_flat(qflat, phi, flat, src):
    NL, S = phi.shape
    for m in range(NL):
        sm = src[m]
        for k in range(S):
            qflat[flat[m, k]] += phi[m, k] * sm


@njit(cache=True)
def conv_u_2d(u, v, h):
    m0, m1 = u.shape
    out = np.zeros_like(u)
    for i in range(1, m0 - 1):
        for j in range(1, m1 - 1):
            ue = 0.5 * (u[i, j] + u[i + 1, j])
            uw = 0.5 * (u[i - 1, j] + u[i, j])
            un = 0.5 * (u[i, j] + u[i, j + 1])
            us = 0.5 * (u[i, j - 1] + u[i, j])
            vn = 0.5 * (v[i - 1, j + 1] + v[i, j + 1])
            vs = 0.5 * (v[i - 1, j] + v[i, j])
            out[i, j] = -(ue * ue - uw * uw) / h - (un * vn - us * vs) / h
    return out


@njit(cache=True)
def conv_v_2d(u, v, h):
    m0, m1 = v.shape
    out = np.zeros_like(v)
    for i in range(1, m0 - 1):
        for j in range(1, m1 - 1):
            vn = 0.5 * (v[i, j] + v[i, j + 1])
            vs = 0.5 * (v[i, j - 1] + v[i, j])
            ve = 0.5 * (v[i, j] + v[i + 1, j])
            vw = 0.5 * (v[i - 1, j] + v[i, j])
            ue = 0.5 * (u[i + 1, j - 1] + u[i + 1, j])
            uw = 0.5 * (u[i, j - 1] + u[i, j])
            out[i, j] = -(vn * vn - vs * vs) / h - (ve * ue - vw * uw) / h
    return out


@njit(cache=True)
def conv_u_3d(u, v, w, h):
    m0, m1, m2 = u.shape
    out = np.zeros_like(u)
    for i in range(1, m0 - 1):
        for j in range(1, m1 - 1):
            for k in range(1, m2 - 1):
                uc = u[i, j, k]
                ue = 0.5 * (uc + u[i + 1, j, k])
                uw = 0.5 * (u[i - 1, j, k] + uc)
                un = 0.5 * (uc + u[i, j + 1, k])
                us = 0.5 * (u[i, j - 1, k] + uc)
                ut = 0.5 * (uc + u[i, j, k + 1])
                ub = 0.5 * (u[i, j, k - 1] + uc)
                vn = 0.5 * (v[i - 1, j + 1, k] + v[i, j + 1, k])
                vs = 0.5 * (v[i - 1, j, k] + v[i, j, k])
                wt = 0.5 * (w[i - 1, j, k + 1] + w[i, j, k + 1])
                wb = 0.5 * (w[i - 1, j, k] + w[i, j, k])
                out[i, j, k] = (
                    -(ue * ue - uw * uw) / h
                    - (un * vn - us * vs) / h
                    - (ut * wt - ub * wb) / h
                )
    return out


@njit(cache=True)
def conv_v_3d(u, v, w, h):
    m0, m1, m2 = v.shape
    out = np.zeros_like(v)
    for i in range(1, m0 - 1):
        for j in range(1, m1 - 1):
            for k in range(1, m2 - 1):
                vc = v[i, j, k]
                vn = 0.5 * (vc + v[i, j + 1, k])
                vs = 0.5 * (v[i, j - 1, k] + vc)
                ve = 0.5 * (vc + v[i + 1, j, k])
                vw = 0.5 * (v[i - 1, j, k] + vc)
                vt = 0.5 * (vc + v[i, j, k + 1])
                vb = 0.5 * (v[i, j, k - 1] + vc)
                ue = 0.5 * (u[i + 1, j - 1, k] + u[i + 1, j, k])
                uw = 0.5 * (u[i, j - 1, k] + u[i, j, k])
                wt = 0.5 * (w[i, j - 1, k + 1] + w[i, j, k + 1])
                wb = 0.5 * (w[i, j - 1, k] + w[i, j, k])
                out[i, j, k] = (
                    -(vn * vn - vs * vs) / h
                    - (ve * ue - vw * uw) / h
                    - (vt * wt - vb * wb) / h
                )
    return out


@njit(cache=True)
def conv_w_3d(u, v, w, h):
    m0, m1, m2 = w.shape
    out = np.zeros_like(w)
    for i in range(1, m0 - 1):
        for j in range(1, m1 - 1):
            for k in range(1, m2 - 1):
                wc = w[i, j, k]
                wt = 0.5 * (wc + w[i, j, k + 1])
                wb = 0.5 * (w[i, j, k - 1] + wc)
                we = 0.5 * (wc + w[i + 1, j, k])
                ww = 0.5 * (w[i - 1, j, k] + wc)
                wn = 0.5 * (wc + w[i, j + 1, k])
                ws = 0.5 * (w[i, j - 1, k] + wc)
                ue = 0.5 * (u[i + 1, j, k - 1] + u[i + 1, j, k])
                uw = 0.5 * (u[i, j, k - 1] + u[i, j, k])
                vn = 0.5 * (v[i, j + 1, k - 1] + v[i, j + 1, k])
                vs = 0.5 * (v[i, j, k - 1] + v[i, j, k])
                out[i, j, k] = (
                    -(we * ue - ww * uw) / h
                    - (wn * vn - ws * vs) / h
                    - (wt * wt - wb * wb) / h
                )
    return out


@njit(cache=True)
def lap_2d(q, h):
    m0, m1 = q.shape
    out = np.zeros_like(q)
    ih2 = 1.0 / (h * h)
    for i in range(1, m0 - 1):
        for j in range(1, m1 - 1):
            out[i, j] = (
                q[i + 1, j] + q[i - 1, j] + q[i, j + 1] + q[i, j - 1] - 4.0 * q[i, j]
            ) * ih2
    return out


@njit(cache=True)
def lap_3d(q, h):
    m0, m1, m2 = q.shape
    out = np.zeros_like(q)
    ih2 = 1.0 / (h * h)
    for i in range(1, m0 - 1):
        for j in range(1, m1 - 1):
            for k in range(1, m2 - 1):
                out[i, j, k] = (
                    q[i + 1, j, k]
                    + q[i - 1, j, k]
                    + q[i, j + 1, k]
                    + q[i, j - 1, k]
                    + q[i, j, k + 1]
                    + q[i, j, k - 1]
                    - 6.0 * q[i, j, k]
                ) * ih2
    return out


@njit(cache=True)
def div_2d(u, v, h):
    nx = v.shape[0] - 2
    ny = u.shape[1] - 2
    out = np.empty((nx, ny))
    for c0 in range(nx):
        for c1 in range(ny):
            out[c0, c1] = (
                u[c0 + 2, c1 + 1] - u[c0 + 1, c1 + 1] + v[c0 + 1, c1 + 2] - v[c0 + 1, c1 + 1]
            ) / h
    return out


@njit(cache=True)
def div_3d(u, v, w, h):
    nx = v.shape[0] - 2
    ny = w.shape[1] - 2
    nz = u.shape[2] - 2
    out = np.empty((nx, ny, nz))
    for c0 in range(nx):
        for c1 in range(ny):
            for c2 in range(nz):
                out[c0, c1, c2] = (
                    u[c0 + 2, c1 + 1, c2 + 1]
                    - u[c0 + 1, c1 + 1, c2 + 1]
                    + v[c0 + 1, c1 + 2, c2 + 1]
                    - v[c0 + 1, c1 + 1, c2 + 1]
                    + w[c0 + 1, c1 + 1, c2 + 2]
                    - w[c0 + 1, c1 + 1, c2 + 1]
                ) / h
    return out


@njit(cache=True)
def thomas_spectral(dl, dd, du, lam, rhs, pin_index):
    P, n = rhs.shape
    x = np.empty((P, n), dtype=np.complex128)
    cp = np.empty(n)
    dp = np.empty(n, dtype=np.complex128)
    for p in range(P):
        if p == pin_index:
            b0 = 1.0
            c0 = 0.0
            r0 = 0.0 + 0.0j
        else:
            b0 = dd[0] + lam[p]
            c0 = du[0] if n > 1 else 0.0
            r0 = rhs[p, 0]
        cp[0] = c0 / b0
        dp[0] = r0 / b0
        for i in range(1, n):
            den = (dd[i] + lam[p]) - dl[i] * cp[i - 1]
            cp[i] = (du[i] if i < n - 1 else 0.0) / den
            dp[i] = (rhs[p, i] - dl[i] * dp[i - 1]) / den
        x[p, n - 1] = dp[n - 1]
        for i in range(n - 2, -1, -1):
            x[p, i] = dp[i] - cp[i] * x[p, i + 1]
    return x


@njit(cache=True)
def thomas_batch(dl, dd, du, rhs):
    P, n = rhs.shape
    x = np.empty_like(rhs)
    cp = np.empty(n)
    den = np.empty(n)
    den[0] = dd[0]
    cp[0] = (du[0] if n > 1 else 0.0) / den[0]
    for i in range(1, n):
        den[i] = dd[i] - dl[i] * cp[i - 1]
        cp[i] = (du[i] if i < n - 1 else 0.0) / den[i]
    dp = np.empty(n)
    for p in range(P):
        dp[0] = rhs[p, 0] / den[0]
        for i in range(1, n):
            dp[i] = (rhs[p, i] - dl[i] * dp[i - 1]) / den[i]
        x[p, n - 1] = dp[n - 1]
        for i in range(n - 2, -1, -1):
            x[p, i] = dp[i] - cp[i] * x[p, i + 1]
    return x


@njit(cache=True)
def tridiag_const(a, b, c, rhs):
    P, n = rhs.shape
    x = np.empty_like(rhs)
    cp = np.empty(n)
    cp[0] = c / b
    for i in range(1, n):
        cp[i] = c / (b - a * cp[i - 1])
    dp = np.empty(n)
    for p in range(P):
        dp[0] = rhs[p, 0] / b
        for i in range(1, n):
            dp[i] = (rhs[p, i] - a * dp[i - 1]) / (b - a * cp[i - 1])
        x[p, n - 1] = dp[n - 1]
        for i in range(n - 2, -1, -1):
            x[p, i] = dp[i] - cp[i] * x[p, i + 1]
    return x


@njit(cache=True)
def cyclic_tridiag_const(a, b, c, rhs):
    P, n = rhs.shape
    gamma = -b
    d0 = b - gamma
    dlast = b - c * a / gamma
    cp = np.empty(n)
    cp[0] = c / d0
    for i in range(1, n):
        di = dlast if i == n - 1 else b
        cp[i] = c / (di - a * cp[i - 1])
    z = np.empty(n)
    z[0] = gamma / d0
    for i in range(1, n):
        di = dlast if i == n - 1 else b
        ri = c if i == n - 1 else 0.0
        z[i] = (ri - a * z[i - 1]) / (di - a * cp[i - 1])
    for i in range(n - 2, -1, -1):
        z[i] = z[i] - cp[i] * z[i + 1]
    vz = 1.0 + z[0] + (a / gamma) * z[n - 1]
    x = np.empty_like(rhs)
    dp = np.empty(n)
    for p in range(P):
        dp[0] = rhs[p, 0] / d0
        for i in range(1, n):
            di = dlast if i == n - 1 else b
            dp[i] = (rhs[p, i] - a * dp[i - 1]) / (di - a * cp[i - 1])
        x[p, n - 1] = dp[n - 1]
        for i in range(n - 2, -1, -1):
            x[p, i] = dp[i] - cp[i] * x[p, i + 1]
        vy = x[p, 0] + (a / gamma) * x[p, n - 1]
        fac = vy / vz
        for i in range(n):
            x[p, i] = x[p, i] - fac * z[i]
    return x
