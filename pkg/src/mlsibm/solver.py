"""Incompressible fractional-step solver on the uniform staggered grid.

Time integration is the low-storage three-substep RK3 (gamma = [8/15, 5/12,
3/4], zeta = [0, -17/60, -5/12]); each substep advances a pressure-free
predictor, updates any convective-outflow boundary (with a global mass-flux
fix), applies immersed-boundary forcing to the intermediate velocity, and
projects onto divergence-free fields with the substep interval tau = alpha_j
* dt.  The viscous term is explicit by default; a Crank-Nicolson option via
directional approximate factorization (one tridiagonal sweep per axis, delta
form) removes the diffusive time-step limit.

Velocity components live on ghosted face lattices (one ghost layer);
pressure on ghosted cell centers.  Boundary faces on non-periodic axes hold
prescribed values and are excluded from the interior update slices.
"""

import time
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .coupling import actual_force, desired_force, interpolate
from .errors import ConfigError, DivergedError, PoissonError
from .poisson import PressureSolver

RK_GAMMA = (8.0 / 15.0, 5.0 / 12.0, 3.0 / 4.0)
RK_ZETA = (0.0, -17.0 / 60.0, -5.0 / 12.0)
RK_ALPHA = tuple(g + z for g, z in zip(RK_GAMMA, RK_ZETA))
RK_TIME = tuple(float(np.sum(RK_ALPHA[: j + 1])) for j in range(3))  # -> 1.0

BLOWUP_FACTOR = 1e6
DIV_GUARD = 1e-8          # hard abort; the advertised postcondition is 1e-10
BC_KINDS = ("periodic", "inflow", "outflow", "wall")
EXPLICIT, IMPLICIT_CN = "explicit", "cn"


@dataclass(frozen=True)
class FluidParams:
    """Viscosity, time-step control and viscous treatment."""

    nu: float
    cfl: float = 0.2
    viscous: str = EXPLICIT
    u_ref: float = 1.0
    dt_max: float | None = None

    def __post_init__(self):
        if not self.nu > 0:
            raise ConfigError(f"kinematic viscosity must be positive, got {self.nu}")
        if not 0 < self.cfl < 1:
            raise ConfigError(f"CFL must lie in (0, 1), got {self.cfl}")
        if self.viscous not in (EXPLICIT, IMPLICIT_CN):
            raise ConfigError(f"viscous treatment must be 'explicit' or 'cn', "
                              f"got {self.viscous!r}")
        if not self.u_ref > 0:
            raise ConfigError("reference velocity must be positive")
        if self.dt_max is not None and not self.dt_max > 0:
            raise ConfigError("dt_max must be positive when set")


@dataclass(frozen=True)
class FaceBC:
    kind: str
    velocity: tuple = None

    def __post_init__(self):
        if self.kind not in BC_KINDS:
            raise ConfigError(f"unknown boundary kind {self.kind!r}")
        if self.kind == "inflow" and self.velocity is None:
            raise ConfigError("inflow face needs a velocity vector")


class BoundarySpec:
    """Per-face boundary conditions, one (lo, hi) pair per axis."""

    def __init__(self, axes):
        self.axes = [(lo if isinstance(lo, FaceBC) else FaceBC(lo),
                      hi if isinstance(hi, FaceBC) else FaceBC(hi))
                     for lo, hi in axes]

    @classmethod
    def periodic_box(cls, ndim):
        return cls([("periodic", "periodic")] * ndim)

    def face(self, axis, side):
        return self.axes[axis][side]

    @property
    def outflows(self):
        return [(a, s) for a, pair in enumerate(self.axes)
                for s, bc in enumerate(pair) if bc.kind == "outflow"]

    def validate(self, grid):
        if len(self.axes) != grid.ndim:
            raise ConfigError(f"{len(self.axes)} BC axes for a {grid.ndim}D grid")
        has_inflow = has_outflow = False
        for a, (lo, hi) in enumerate(self.axes):
            per = (lo.kind == "periodic", hi.kind == "periodic")
            if per[0] != per[1]:
                raise ConfigError(f"axis {a}: periodic faces must be paired")
            if per[0] != bool(grid.periodic[a]):
                raise ConfigError(
                    f"axis {a}: boundary kind disagrees with grid periodicity")
            n_out = sum(bc.kind == "outflow" for bc in (lo, hi))
            if n_out > 1:
                raise ConfigError(f"axis {a}: more than one outflow face")
            for bc in (lo, hi):
                if bc.kind == "inflow":
                    has_inflow = True
                    if len(bc.velocity) != grid.ndim:
                        raise ConfigError("inflow velocity length != ndim")
                if bc.kind == "outflow":
                    has_outflow = True
        if has_inflow and not has_outflow:
            raise ConfigError("inflow without any outflow cannot conserve mass")
        return self


def _ax(nd, a, idx):
    sl = [slice(None)] * nd
    sl[a] = idx
    return tuple(sl)


@dataclass
class FlowState:
    grid: object
    u: list
    p: np.ndarray
    t: float = 0.0
    step: int = 0

    @classmethod
    def zeros(cls, grid):
        u = [grid.alloc(c, gw=1) for c in range(grid.ndim)]
        p = grid.alloc("cell", gw=1)
        return cls(grid, u, p)

    @classmethod
    def from_functions(cls, grid, fns, t=0.0):
        """Initialize from per-component callables of the node coordinates."""
        st = cls.zeros(grid)
        st.t = t
        for c, fn in enumerate(fns):
            lat = grid.lattice(c)
            coords = np.meshgrid(*(lat.axis_coords(a) for a in range(grid.ndim)),
                                 indexing="ij")
            st.u[c][st.interior(c)] = fn(*coords)
        return st

    def interior(self, c):
        lat = self.grid.lattice(c)
        return tuple(slice(1, int(n) + 1) for n in lat.counts)

    @property
    def p_interior(self):
        return self.p[tuple(slice(1, -1) for _ in range(self.grid.ndim))]

    def max_velocity(self):
        # np.max propagates NaN; python max() would silently drop it
        return float(np.max([np.max(np.abs(self.u[c][self.interior(c)]))
                             for c in range(self.grid.ndim)]))

    def copy(self):
        return FlowState(self.grid, [a.copy() for a in self.u], self.p.copy(),
                         self.t, self.step)


@dataclass
class StepDiagnostics:
    """Per-step record: forcing quality, projection quality, cost."""

    t: float
    dt: float
    residual_l1: float | None
    z: np.ndarray | None
    force: np.ndarray               # alpha-weighted sum of F dV over substeps
    max_div: float
    vmax: float
    mass_imbalance: float
    wall_time: float
    outflow_warnings: int
    mls_fallbacks: int
    substep_residuals: list = field(default_factory=list)
    forcing: list = field(default_factory=list)   # last-substep per-body diags
    captured: tuple = None          # (F, F*) of the last substep when requested


class FractionalStepSolver:
    def __init__(self, grid, params, bcs, bodies=(), body_force=None):
        self.grid = grid
        self.params = params
        self.bcs = bcs.validate(grid)
        self.bodies = list(bodies)
        nd = grid.ndim
        if body_force is None:
            body_force = np.zeros(nd)
        self.body_force = np.asarray(body_force, dtype=float)
        if self.body_force.shape != (nd,):
            raise ConfigError("body force must have one component per axis")
        self.poisson = PressureSolver.for_grid(grid)
        self._upd = []
        self._counts = []
        for c in range(nd):
            counts = grid.lattice(c).counts
            self._counts.append([int(x) for x in counts])
            sls = []
            for a in range(nd):
                if a == c and not grid.periodic[a]:
                    sls.append(slice(2, grid.dims[a] + 1))
                else:
                    sls.append(slice(1, int(counts[a]) + 1))
            self._upd.append(tuple(sls))
        self.outflow_warnings = 0

    # -- boundary handling ------------------------------------------------

    def fill_ghosts(self, fields):
        nd = self.grid.ndim
        dims = self.grid.dims
        for c, arr in enumerate(fields):
            for a in range(nd):
                n = dims[a]
                if self.grid.periodic[a]:
                    last = int(self._counts[c][a])
                    arr[_ax(nd, a, 0)] = arr[_ax(nd, a, last)]
                    arr[_ax(nd, a, last + 1)] = arr[_ax(nd, a, 1)]
                    continue
                lo = self.bcs.face(a, 0)
                hi = self.bcs.face(a, 1)
                if c == a:
                    if lo.kind == "inflow":
                        arr[_ax(nd, a, 1)] = lo.velocity[c]
                    elif lo.kind == "wall":
                        arr[_ax(nd, a, 1)] = 0.0
                    arr[_ax(nd, a, 0)] = (2.0 * arr[_ax(nd, a, 1)]
                                          - arr[_ax(nd, a, 2)])
                    if hi.kind == "inflow":
                        arr[_ax(nd, a, n + 1)] = hi.velocity[c]
                    elif hi.kind == "wall":
                        arr[_ax(nd, a, n + 1)] = 0.0
                    arr[_ax(nd, a, n + 2)] = (2.0 * arr[_ax(nd, a, n + 1)]
                                              - arr[_ax(nd, a, n)])
                else:
                    if lo.kind == "inflow":
                        arr[_ax(nd, a, 0)] = 2.0 * lo.velocity[c] - arr[_ax(nd, a, 1)]
                    elif lo.kind == "wall":
                        arr[_ax(nd, a, 0)] = -arr[_ax(nd, a, 1)]
                    else:
                        arr[_ax(nd, a, 0)] = arr[_ax(nd, a, 1)]
                    if hi.kind == "inflow":
                        arr[_ax(nd, a, n + 1)] = 2.0 * hi.velocity[c] - arr[_ax(nd, a, n)]
                    elif hi.kind == "wall":
                        arr[_ax(nd, a, n + 1)] = -arr[_ax(nd, a, n)]
                    else:
                        arr[_ax(nd, a, n + 1)] = arr[_ax(nd, a, n)]

    def fill_pressure_ghosts(self, p):
        nd = self.grid.ndim
        for a in range(nd):
            n = self.grid.dims[a]
            if self.grid.periodic[a]:
                p[_ax(nd, a, 0)] = p[_ax(nd, a, n)]
                p[_ax(nd, a, n + 1)] = p[_ax(nd, a, 1)]
            else:
                p[_ax(nd, a, 0)] = p[_ax(nd, a, 1)]
                p[_ax(nd, a, n + 1)] = p[_ax(nd, a, n)]

    def convective_outflow_update(self, fields, tau):
        """Advect outflow-face normal velocity and rebalance the mass flux.

        Returns the pre-correction net outward volume flux.  A non-positive
        advection speed falls back to a zero-gradient copy and increments
        the warning counter.
        """
        outs = self.bcs.outflows
        if not outs:
            return 0.0
        nd = self.grid.ndim
        h = self.grid.h
        cell_area = h ** (nd - 1)
        for a, side in outs:
            arr = fields[a]
            n = self.grid.dims[a]
            bidx, inw = (n + 1, n) if side == 1 else (1, 2)
            interior = _ax(nd, a, bidx)
            inner = _ax(nd, a, inw)
            cross = tuple(sl if i == a else slice(1, self.grid.dims[i] + 1)
                          for i, sl in enumerate(interior))
            inner_cross = tuple(sl if i == a else slice(1, self.grid.dims[i] + 1)
                                for i, sl in enumerate(inner))
            sgn = 1.0 if side == 1 else -1.0
            c_speed = sgn * float(np.mean(arr[cross]))
            if c_speed <= 0.0:
                self.outflow_warnings += 1
                arr[cross] = arr[inner_cross]
            else:
                co = c_speed * tau / h
                arr[cross] -= sgn * co * (arr[cross] - arr[inner_cross])
        imbalance = self._net_outward_flux(fields)
        # distribute the correction uniformly over all outflow faces
        n_exit = 0
        for a, side in outs:
            n_exit += int(np.prod([self.grid.dims[i] for i in range(nd) if i != a]))
        corr = -imbalance / (n_exit * cell_area)
        for a, side in outs:
            arr = fields[a]
            n = self.grid.dims[a]
            bidx = n + 1 if side == 1 else 1
            cross = tuple(slice(1, self.grid.dims[i] + 1) if i != a else bidx
                          for i in range(nd))
            arr[cross] += corr if side == 1 else -corr
        return imbalance

    def _net_outward_flux(self, fields):
        nd = self.grid.ndim
        h = self.grid.h
        cell_area = h ** (nd - 1)
        total = 0.0
        for a in range(nd):
            if self.grid.periodic[a]:
                continue
            arr = fields[a]
            n = self.grid.dims[a]
            for side, bidx, sgn in ((0, 1, -1.0), (1, n + 1, 1.0)):
                cross = tuple(slice(1, self.grid.dims[i] + 1) if i != a else bidx
                              for i in range(nd))
                total += sgn * float(np.sum(arr[cross])) * cell_area
        return total

    # -- time-step control -------------------------------------------------

    def compute_dt(self, state):
        vmax = state.max_velocity()
        if not np.isfinite(vmax):
            raise DivergedError("velocity field is not finite")
        p = self.params
        h = self.grid.h
        cands = []
        if vmax > 0:
            cands.append(h / vmax)
        if p.viscous == EXPLICIT:
            cands.append(h * h / (2.0 * self.grid.ndim * p.nu))
        dt = p.cfl * min(cands) if cands else p.cfl * h / p.u_ref
        if p.dt_max is not None:
            dt = min(dt, p.dt_max)
        return dt

    # -- spatial operators ---------------------------------------------------

    def _convective(self, u):
        h = self.grid.h
        if self.grid.ndim == 2:
            return [kernels.conv_u_2d(u[0], u[1], h),
                    kernels.conv_v_2d(u[0], u[1], h)]
        return [kernels.conv_u_3d(u[0], u[1], u[2], h),
                kernels.conv_v_3d(u[0], u[1], u[2], h),
                kernels.conv_w_3d(u[0], u[1], u[2], h)]

    def _laplacian(self, arr):
        return (kernels.lap_2d(arr, self.grid.h) if self.grid.ndim == 2
                else kernels.lap_3d(arr, self.grid.h))

    def divergence(self, fields):
        h = self.grid.h
        if self.grid.ndim == 2:
            return kernels.div_2d(fields[0], fields[1], h)
        return kernels.div_3d(fields[0], fields[1], fields[2], h)

    # -- substep pipeline ----------------------------------------------------

    def advance_substep(self, state, j, dt, conv_prev=None):
        """Predictor for RK substep j (ghosts must be filled); returns the
        convective fluxes for reuse as the next substep's lagged term."""
        vmax = state.max_velocity()
        if not np.isfinite(vmax) or vmax > BLOWUP_FACTOR * self.params.u_ref:
            raise DivergedError(
                f"velocity blew up: max |u| = {vmax:.3g} at t = {state.t:.6g}")
        gam, zet, alf = RK_GAMMA[j], RK_ZETA[j], RK_ALPHA[j]
        nu = self.params.nu
        conv = self._convective(state.u)
        if self.params.viscous == EXPLICIT:
            for c in range(self.grid.ndim):
                upd = self._upd[c]
                lap = self._laplacian(state.u[c])
                incr = gam * conv[c][upd] + alf * (nu * lap[upd]
                                                   + self.body_force[c])
                if conv_prev is not None:
                    incr += zet * conv_prev[c][upd]
                state.u[c][upd] += dt * incr
        else:
            beta = 0.5 * alf * dt * nu
            for c in range(self.grid.ndim):
                upd = self._upd[c]
                lap = self._laplacian(state.u[c])
                rhs = gam * conv[c][upd] + alf * (nu * lap[upd]
                                                  + self.body_force[c])
                if conv_prev is not None:
                    rhs += zet * conv_prev[c][upd]
                state.u[c][upd] += self._cn_sweeps(dt * rhs, c, beta)
        return conv

    def _cn_sweeps(self, rhs, c, beta):
        """Directionally factored (I - beta*Lxx)...(I - beta*Lzz) solve."""
        nd = self.grid.ndim
        bi = beta / (self.grid.h * self.grid.h)
        x = rhs
        for a in range(nd):
            n_line = x.shape[a]
            flat = np.ascontiguousarray(np.moveaxis(x, a, -1)).reshape(-1, n_line)
            if self.grid.periodic[a]:
                sol = kernels.cyclic_tridiag_const(-bi, 1.0 + 2.0 * bi, -bi, flat)
            else:
                dl = np.full(n_line, -bi)
                du = np.full(n_line, -bi)
                dd = np.full(n_line, 1.0 + 2.0 * bi)
                if c != a:
                    # cell-centered along a: ghost closure enters the diagonal
                    for side, end in ((0, 0), (1, n_line - 1)):
                        kind = self.bcs.face(a, side).kind
                        dd[end] = 1.0 + (1.0 if kind == "outflow" else 3.0) * bi
                sol = kernels.thomas_batch(dl, dd, du, flat)
            x = np.moveaxis(sol.reshape(np.moveaxis(x, a, -1).shape), -1, a)
        return x

    def project(self, state, tau):
        """Pressure solve + velocity correction; returns max |div| after."""
        div = self.divergence(state.u)
        p = self.poisson.solve(div / tau)
        nd = self.grid.ndim
        state.p[tuple(slice(1, -1) for _ in range(nd))] = p
        self.fill_pressure_ghosts(state.p)
        h = self.grid.h
        for c in range(nd):
            upd = self._upd[c]
            lo = tuple(slice(sl.start - 1, sl.stop - 1) if a == c else sl
                       for a, sl in enumerate(upd))
            state.u[c][upd] -= (tau / h) * (state.p[upd] - state.p[lo])
        self.fill_ghosts(state.u)     # wrap faces changed; refresh before div
        max_div = float(np.max(np.abs(self.divergence(state.u))))
        scale = self.params.u_ref / h
        if max_div > DIV_GUARD * scale:
            raise PoissonError(
                f"projection left divergence {max_div:.3e} (tolerance "
                f"{DIV_GUARD * scale:.3e})")
        return max_div

    # -- full step -------------------------------------------------------------

    def step(self, state, dt=None, capture_forcing=False):
        wall0 = time.perf_counter()
        if dt is None:
            dt = self.compute_dt(state)
        t0 = state.t
        nd = self.grid.ndim
        conv_prev = None
        force = np.zeros(nd)
        max_div = 0.0
        imbalance = 0.0
        warn0 = self.outflow_warnings
        fallbacks = 0
        sub_res = []
        last_fd = []
        captured = None
        active = [b for b in self.bodies if b.markers.count]
        for j in range(3):
            tau = RK_ALPHA[j] * dt
            t_tgt = t0 + RK_TIME[j] * dt
            for b in active:
                had = b.rebuilds
                b.prepare(self.grid, t_tgt)
                if b.rebuilds != had:
                    fallbacks += b.op.nfallback
            self.fill_ghosts(state.u)
            conv_prev = self.advance_substep(state, j, dt, conv_prev)
            imbalance = self.convective_outflow_update(state.u, tau)
            self.fill_ghosts(state.u)
            if capture_forcing and j == 2 and active:
                b = active[0]
                UL = interpolate(b.op, state.u)
                F = desired_force(b.markers.U_desired, UL, tau)
                captured = (F, actual_force(b.op, F))
            last_fd = []
            for b in active:
                fd = b.force(state.u, tau, u_ref=self.params.u_ref)
                force += RK_ALPHA[j] * (fd.applied.T @ b.op.dV)
                last_fd.append(fd)
            if last_fd:
                nmk = sum(b.markers.count for b in active)
                sub_res.append(sum(fd.residual_l1 * b.markers.count
                                   for fd, b in zip(last_fd, active)) / nmk)
                # spreading wrote interior nodes; wrap ghosts must agree
                # before the projection measures the divergence
                self.fill_ghosts(state.u)
            max_div = self.project(state, tau)
        state.t = t0 + dt
        state.step += 1
        return StepDiagnostics(
            t=state.t, dt=dt,
            residual_l1=sub_res[-1] if sub_res else None,
            z=last_fd[0].Z.copy() if last_fd else None,
            force=force,
            max_div=max_div,
            vmax=state.max_velocity(),
            mass_imbalance=imbalance,
            wall_time=time.perf_counter() - wall0,
            outflow_warnings=self.outflow_warnings - warn0,
            mls_fallbacks=fallbacks,
            substep_residuals=sub_res,
            forcing=last_fd,
            captured=captured,
        )
