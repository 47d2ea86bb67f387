"""Pressure-Poisson solves on the uniform staggered grid.

The discrete operator is the standard 2d+1-point Laplacian on cell centers
with periodic wrap on periodic axes and homogeneous Neumann closure on the
others (ghost = first interior cell).  Solution strategy by periodicity:

- all axes periodic: full FFT diagonalization;
- exactly one non-periodic axis: FFT over the periodic axes, then one
  batched tridiagonal solve per spectral pencil along the remaining axis
  (the zero-mode pencil is singular and gets pinned);
- two or more non-periodic axes: matrix-free conjugate gradients.

All paths return a mean-free solution (the operator's gauge freedom).
"""

import numpy as np
from scipy.sparse.linalg import LinearOperator, cg

from . import kernels
from .errors import PoissonError

CG_RTOL = 1e-10


def _mode_eigs(n, h, real_axis=False):
    """Eigenvalues of the periodic 1D second difference, FFT ordering."""
    k = np.arange(n // 2 + 1) if real_axis else np.arange(n)
    return (2.0 * np.cos(2.0 * np.pi * k / n) - 2.0) / (h * h)


def _neumann_pad(p, periodic):
    """Ghosted copy: wrap on periodic axes, edge-replicate elsewhere."""
    q = np.pad(p, 1, mode="edge")
    nd = p.ndim
    for a in range(nd):
        if not periodic[a]:
            continue
        lo = [slice(None)] * nd
        hi = [slice(None)] * nd
        src_hi = [slice(None)] * nd
        src_lo = [slice(None)] * nd
        lo[a] = 0
        src_hi[a] = -2
        hi[a] = -1
        src_lo[a] = 1
        q[tuple(lo)] = q[tuple(src_hi)]
        q[tuple(hi)] = q[tuple(src_lo)]
    return q


def apply_laplacian(p, h, periodic):
    """Discrete Laplacian of a cell-centered field, Neumann/periodic closure."""
    q = _neumann_pad(p, periodic)
    lap = kernels.lap_2d(q, h) if p.ndim == 2 else kernels.lap_3d(q, h)
    return lap[tuple(slice(1, -1) for _ in range(p.ndim))]


class PressureSolver:
    """Solves lap(p) = rhs for one grid shape; transforms are precomputed."""

    def __init__(self, dims, h, periodic):
        self.dims = tuple(int(d) for d in dims)
        self.h = float(h)
        self.periodic = tuple(bool(b) for b in periodic)
        self.nd = len(self.dims)
        self.iterations = 0             # CG path only
        open_axes = [a for a in range(self.nd) if not self.periodic[a]]
        if not open_axes:
            self.mode = "fft"
            eigs = [_mode_eigs(n, h, real_axis=(a == self.nd - 1))
                    for a, n in enumerate(self.dims)]
            denom = np.zeros([len(e) for e in eigs])
            for a, e in enumerate(eigs):
                shape = [1] * self.nd
                shape[a] = len(e)
                denom = denom + e.reshape(shape)
            denom.flat[0] = 1.0          # zero mode handled separately
            self._denom = denom
        elif len(open_axes) == 1:
            self.mode = "fft-line"
            ax = open_axes[0]
            perm = [a for a in range(self.nd) if a != ax] + [ax]
            self._perm = perm
            self._iperm = list(np.argsort(perm))
            tdims = [self.dims[a] for a in perm]
            eigs = [_mode_eigs(tdims[i], h, real_axis=(i == self.nd - 2))
                    for i in range(self.nd - 1)]
            mshape = [len(e) for e in eigs]
            lam = np.zeros(mshape)
            for i, e in enumerate(eigs):
                shape = [1] * (self.nd - 1)
                shape[i] = len(e)
                lam = lam + e.reshape(shape)
            self._lam = lam.ravel()
            n = tdims[-1]
            ih2 = 1.0 / (h * h)
            self._dl = np.full(n, ih2)
            self._du = np.full(n, ih2)
            dd = np.full(n, -2.0 * ih2)
            dd[0] = dd[-1] = -ih2
            self._dd = dd
            self._tshape = tdims
        else:
            self.mode = "cg"
            N = int(np.prod(self.dims))

            def matvec(x):
                return apply_laplacian(x.reshape(self.dims), self.h,
                                       self.periodic).ravel()

            self._A = LinearOperator((N, N), matvec=matvec, dtype=np.float64)

    @classmethod
    def for_grid(cls, grid):
        return cls(grid.dims, grid.h, grid.periodic)

    def solve(self, rhs):
        rhs = np.asarray(rhs, dtype=np.float64)
        if rhs.shape != self.dims:
            raise PoissonError(f"rhs shape {rhs.shape} != grid dims {self.dims}")
        if self.mode == "fft":
            p = self._solve_fft(rhs)
        elif self.mode == "fft-line":
            p = self._solve_fft_line(rhs)
        else:
            p = self._solve_cg(rhs)
        if not np.all(np.isfinite(p)):
            raise PoissonError("pressure solve produced non-finite values")
        return p - p.mean()

    def _solve_fft(self, rhs):
        hat = np.fft.rfftn(rhs)
        hat /= self._denom
        hat.flat[0] = 0.0
        return np.fft.irfftn(hat, s=self.dims, axes=range(self.nd))

    def _solve_fft_line(self, rhs):
        t = np.transpose(rhs, self._perm)
        axes = list(range(self.nd - 1))
        hat = np.fft.rfftn(t, axes=axes)
        n = self._tshape[-1]
        pencils = np.ascontiguousarray(hat.reshape(-1, n))
        # zero mode: singular Neumann line; enforce solvability then pin x0=0
        pencils[0] -= pencils[0].mean()
        x = kernels.thomas_spectral(self._dl, self._dd, self._du,
                                    self._lam, pencils, 0)
        x = x.reshape(hat.shape)
        out = np.fft.irfftn(x, s=self._tshape[:-1], axes=axes)
        return np.transpose(out, self._iperm)

    def _solve_cg(self, rhs):
        b = (rhs - rhs.mean()).ravel()
        bnorm = np.linalg.norm(b)
        if bnorm == 0.0:
            return np.zeros(self.dims)
        # absolute floor tied to the raw rhs scale: when the compatible part
        # of rhs is at rounding level (e.g. a constant field), the initial
        # residual already qualifies and CG must not chase it to maxiter
        atol = 1e-13 * np.linalg.norm(rhs)
        x, info = cg(self._A, b, rtol=CG_RTOL, atol=atol,
                     maxiter=max(10000, 50 * max(self.dims)))
        if info != 0:
            raise PoissonError(f"conjugate gradients failed (info={info})")
        self.iterations += 1
        return x.reshape(self.dims)

    def residual_norm(self, p, rhs):
        """Max |lap(p) - rhs| after removing the incompatible mean of rhs."""
        r = apply_laplacian(p, self.h, self.periodic) - (rhs - np.mean(rhs))
        return float(np.max(np.abs(r)))
