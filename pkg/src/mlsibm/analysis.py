"""Straight-boundary error theory for the spread/interpolate composition.

A dense line of markers carrying constant force F=1 is spread onto a uniform
lattice and interpolated back at probe markers; the ratio F/F* measures how
much the composition under-applies force.  For an axis-parallel line the
ratio is constant along the boundary, independent of the lattice origin and
of h, and (for the constant basis) has a separable closed form

    F/F* = 1 / (C1*K1 + C4*K4 + C7*K7)

with one (C, K) pair per stencil row.  This module provides the numeric
ratio, the closed form, alpha sweeps of the ratio variation, force-ratio
histograms, and executable checks of the invariance properties.
"""

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, NumericalError
from .grid import make_lattice
from .mls import CONSTANT, DEFAULT_ALPHA, LINEAR, basis_flag, shape_matrix

MIN_EXTENT = 7  # cells along the boundary; edge effects die out well inside


# ---------------------------------------------------------------------------
# numeric ratio on the miniature strip

def _line_lattice(h, extent, ny=9):
    """Periodic-in-x strip of ``extent`` cells, ny node rows in y."""
    return make_lattice([0.0, 0.0], [extent, ny], [True, False], h)


def _spread_unit_line(Y0, alpha, basis, n, h, extent, lat=None):
    """Spread F=1 from n markers/cell on the line y = y_mid + Y0.

    Returns (lattice, field, y_line).  Marker volumes follow the production
    rule dV_l = A_l * h_l with A_l = h/n and h_l = h * sum(phi), which makes
    the spreading coefficient exactly 1/n here.
    """
    if extent < MIN_EXTENT:
        raise ConfigError(f"extent must be >= {MIN_EXTENT} cells")
    if lat is None:
        lat = _line_lattice(h, extent)
    y_line = (lat.counts[1] // 2) * h + Y0
    NL = n * extent
    X = np.empty((NL, 2))
    X[:, 0] = (np.arange(NL) + 0.5) * (h / n)
    X[:, 1] = y_line
    phi, flat, _ = shape_matrix(X, lat, alpha, basis, gw=0)
    phisum = phi.sum(axis=1)
    hl = h * phisum
    dVl = (h / n) * hl
    cl = dVl / (phisum * h * h)
    f = np.zeros(lat.gshape(0))
    np.add.at(f.ravel(), flat, phi * cl[:, None])
    return lat, f, y_line


def _probe_ratio(lat, f, probes, alpha, basis):
    phi, flat, _ = shape_matrix(np.atleast_2d(probes), lat, alpha, basis, gw=0)
    G = (f.ravel()[flat] * phi).sum(axis=1)
    if np.any(G <= 0):
        raise NumericalError("probe received no spread force; line too short?")
    return 1.0 / G


def straight_line_ratio_numeric(Y0, alpha=DEFAULT_ALPHA, basis=LINEAR, n=64,
                                h=1.0, extent=8, probe_x=None):
    """F/F* at a probe marker on a straight boundary at offset Y0.

    Y0 is the signed distance from the nearest grid line (any multiple of h
    gives the same answer).  ``probe_x`` defaults to a marker at mid-strip;
    the ratio is independent of this choice.
    """
    lat, f, y_line = _spread_unit_line(Y0, alpha, basis, n, h, extent)
    if probe_x is None:
        probe_x = (extent // 2 + 0.5 / n) * h
    probes = np.array([[float(probe_x), y_line]])
    return float(_probe_ratio(lat, f, probes, alpha, basis)[0])


def straight_line_ratio_profile(Y0, alpha, basis, n, probes_x, h=1.0, extent=8):
    """Ratios at several probe x positions along one line (constancy checks)."""
    lat, f, y_line = _spread_unit_line(Y0, alpha, basis, n, h, extent)
    probes = np.column_stack([np.asarray(probes_x, dtype=float),
                              np.full(len(probes_x), y_line)])
    return _probe_ratio(lat, f, probes, alpha, basis)


def rotated_line_ratios(angle_deg, Y0=0.3, alpha=DEFAULT_ALPHA, basis=LINEAR,
                        n=64, h=1.0, extent=12, probe_offsets=(-0.8, -0.3, 0.0, 0.4, 0.9)):
    """Ratios at probes along a line rotated off-axis by ``angle_deg``.

    The constancy theorem assumes an axis-parallel boundary; for a rotated
    line the ratios vary along the boundary, so the spread of the returned
    values is expected to be large.  Uses a fully non-periodic lattice with
    probes well inside the line's span.
    """
    th = np.deg2rad(angle_deg)
    d = np.array([np.cos(th), np.sin(th)])
    nrm = np.array([-np.sin(th), np.cos(th)])
    L = extent * h
    rise = int(np.ceil(L / 2 * abs(np.sin(th)) / h + abs(Y0) / h))
    nx, ny = extent + 6, 9 + 2 * rise
    lat = make_lattice([0.0, 0.0], [nx + 1, ny], [False, False], h)
    center = np.array([(nx // 2) * h, (ny // 2) * h])
    NL = n * extent
    s = (np.arange(NL) + 0.5) * (h / n) - L / 2
    X = center + s[:, None] * d[None, :] + (Y0 * h) * nrm[None, :]
    phi, flat, _ = shape_matrix(X, lat, alpha, basis, gw=0)
    phisum = phi.sum(axis=1)
    cl = ((h / n) * h * phisum) / (phisum * h * h)
    f = np.zeros(lat.gshape(0))
    np.add.at(f.ravel(), flat, phi * cl[:, None])
    probes = center + (np.asarray(probe_offsets) * h)[:, None] * d[None, :] \
        + (Y0 * h) * nrm[None, :]
    return _probe_ratio(lat, f, probes, alpha, basis)


# ---------------------------------------------------------------------------
# constant-basis closed form

def _row_quadrature(Y0, alpha, h, n):
    """K_i: dense-limit force landing on one node of row i, per unit F.

    Midpoint rule over markers at (l+0.5)h/n; the Shepard weights are
    separable, so each marker contributes wx0 * wy_i / (sum(wx) * sum(wy)).
    """
    a2 = (alpha * 1.5 * h) ** 2
    j0 = int(np.floor(Y0 / h + 0.5))
    yr = (j0 + np.array([-1.0, 0.0, 1.0])) * h
    wy = np.exp(-((yr - Y0) ** 2) / a2)
    xs = (np.arange(-3 * n, 3 * n) + 0.5) * (h / n)
    i0 = np.floor(xs / h + 0.5)
    dxs = xs[:, None] - (i0[:, None] + np.array([-1.0, 0.0, 1.0])[None, :]) * h
    wx = np.exp(-(dxs ** 2) / a2)
    inside = np.abs(i0) <= 1          # markers whose stencil contains x = 0
    w0 = np.exp(-(xs ** 2) / a2) * inside
    xpart = (w0 / wx.sum(axis=1)).sum() / n
    return wy / wy.sum() * xpart


def closed_form_ratio_const_basis(Y0, alpha, h=1.0, n=256, quad_tol=1e-6):
    """Constant-basis F/F* = 1/(C1*K1 + C4*K4 + C7*K7).

    C_i are the row interpolation weights exp(-dy_i^2/(alpha*H)^2) normalized
    over the three rows; K_i comes from midpoint quadrature with a Richardson
    step-halving check (relative change must fall below ``quad_tol``).
    """
    a2 = (alpha * 1.5 * h) ** 2
    j0 = int(np.floor(Y0 / h + 0.5))
    dy2 = (((j0 + np.array([-1.0, 0.0, 1.0])) * h) - Y0) ** 2
    C = np.empty(3)
    for i in range(3):
        C[i] = 1.0 / np.exp((dy2[i] - dy2) / a2).sum()
    K = _row_quadrature(Y0, alpha, h, n)
    K2 = _row_quadrature(Y0, alpha, h, 2 * n)
    s1, s2 = float(C @ K), float(C @ K2)
    if abs(s1 - s2) > quad_tol * abs(s2):
        raise NumericalError(
            f"row quadrature did not converge: n={n} gives {s1:.10g}, "
            f"2n gives {s2:.10g}"
        )
    return 1.0 / s2


# ---------------------------------------------------------------------------
# profiles and sweeps

@dataclass(frozen=True)
class RatioProfile:
    """F/F* sampled over boundary offsets Y0 within one cell."""

    y0: np.ndarray
    ratio: np.ndarray
    alpha: float
    basis: str
    n: int

    def __post_init__(self):
        r = np.asarray(self.ratio)
        if not (np.all(np.isfinite(r)) and np.all(r > 0)):
            raise NumericalError("ratio profile contains non-finite or "
                                 "non-positive values")

    @property
    def delta(self):
        return float(self.ratio.max() - self.ratio.min())


@dataclass(frozen=True)
class AlphaSweep:
    """Max-min variation of F/F* over Y0, per weight-scale alpha."""

    alpha: np.ndarray
    delta: np.ndarray
    basis: str
    n: int
    y0_steps: int

    def __post_init__(self):
        if np.any(self.delta < 0):
            raise NumericalError("negative ratio variation")

    @property
    def argmin_alpha(self):
        return float(self.alpha[int(np.argmin(self.delta))])


def _y0_samples(h, steps):
    if steps < 2 or steps % 2:
        raise ConfigError("y0 steps must be an even count >= 2")
    return np.arange(steps) * (h / steps)   # covers [0, h), hits 0 and h/2


def ratio_profile(alpha=DEFAULT_ALPHA, basis=LINEAR, n=64, y0_steps=16, h=1.0):
    y0 = _y0_samples(h, y0_steps)
    lat = _line_lattice(h, 8)
    probe_x = (8 // 2 + 0.5 / n) * h
    ratios = np.empty(len(y0))
    for i, v in enumerate(y0):
        la, f, y_line = _spread_unit_line(v, alpha, basis, n, h, 8, lat=lat)
        ratios[i] = _probe_ratio(la, f, np.array([[probe_x, y_line]]),
                                 alpha, basis)[0]
    return RatioProfile(y0, ratios, alpha, basis, n)


def delta_ratio_sweep(alphas, basis=LINEAR, y0_steps=16, n=64, h=1.0):
    """Delta(F/F*) = max-min over a one-cell Y0 sweep, for each alpha."""
    alphas = np.asarray(alphas, dtype=float)
    if np.any(alphas <= 0) or np.any(alphas > 2):
        raise ConfigError("alpha samples must lie in (0, 2]")
    deltas = np.empty(len(alphas))
    for i, a in enumerate(alphas):
        deltas[i] = ratio_profile(a, basis, n, y0_steps, h).delta
    return AlphaSweep(alphas, deltas, basis, n, y0_steps)


# ---------------------------------------------------------------------------
# force-ratio histograms

@dataclass(frozen=True)
class RatioHistogram:
    bin_centers: np.ndarray
    counts: np.ndarray
    peak: float                 # center of the most populated bin
    frac_within: float          # fraction of counted markers within the window
    window: float               # half-width of the window, relative to peak
    n_counted: int
    n_excluded: int

    def single_peaked(self, significance=0.1, smooth=5):
        """True when the smoothed counts have exactly one significant mode.

        Counts are smoothed with a centered moving average so shot noise in
        thin tails does not read as extra modes; maxima below ``significance``
        times the smoothed modal height are ignored.
        """
        c = self.counts.astype(float)
        if not len(c) or c.max() == 0:
            return False
        kern = np.ones(smooth) / smooth
        s = np.convolve(c, kern, mode="same")
        floor = significance * s.max()
        n_modes = 0
        for i in range(len(s)):
            left = s[i - 1] if i > 0 else -np.inf
            right = s[i + 1] if i < len(s) - 1 else -np.inf
            if s[i] >= floor and s[i] > left and s[i] >= right:
                n_modes += 1
        return n_modes == 1


def ratio_histogram(F, Fstar, bins=64, window=0.15):
    """Histogram of per-marker |F|/|F*| using each marker's dominant component.

    Markers whose dominant desired force is below 1e-12 of the global maximum
    are excluded, as are markers with zero received force.
    """
    F = np.atleast_2d(np.asarray(F, dtype=float))
    Fstar = np.atleast_2d(np.asarray(Fstar, dtype=float))
    if F.shape != Fstar.shape:
        raise ConfigError("F and F* shapes differ")
    absF = np.abs(F)
    comp = np.argmax(absF, axis=1)
    rows = np.arange(len(F))
    fsel = F[rows, comp]
    gsel = Fstar[rows, comp]
    floor = 1e-12 * absF.max() if absF.size else 0.0
    keep = (np.abs(fsel) > floor) & (np.abs(gsel) > 0)
    n_excluded = int(len(F) - keep.sum())
    if not np.any(keep):
        raise NumericalError("all markers excluded from the ratio histogram")
    ratios = np.abs(fsel[keep]) / np.abs(gsel[keep])
    counts, edges = np.histogram(ratios, bins=bins)
    centers = 0.5 * (edges[:-1] + edges[1:])
    peak = float(centers[int(np.argmax(counts))])
    lo, hi = peak * (1 - window), peak * (1 + window)
    frac = float(np.mean((ratios >= lo) & (ratios <= hi)))
    return RatioHistogram(centers, counts, peak, frac, window,
                          int(keep.sum()), n_excluded)


# ---------------------------------------------------------------------------
# invariance checks (independent oracle assembly)

def moment_matrix(X, positions, alpha, H):
    """Weighted Gram matrix A = sum_k W_k p_k p_k^T in normalized coordinates.

    Independent of the production shape-function path: assembled here from
    raw node positions for use as an oracle.
    """
    X = np.asarray(X, dtype=float)
    P = np.asarray(positions, dtype=float)
    loc = (P - X) / H
    W = np.exp(-np.sum(((P - X) / (alpha * H)) ** 2, axis=1))
    p = np.column_stack([np.ones(len(P)), loc])
    return np.einsum("k,ki,kj->ij", W, p, p)


def inverse_3x3_adjugate(A):
    """Explicit adjugate-over-determinant inverse of a 3x3 matrix."""
    a, b, c = A[0]
    d, e, f = A[1]
    g, hh, i = A[2]
    cof = np.array([
        [e * i - f * hh, c * hh - b * i, b * f - c * e],
        [f * g - d * i, a * i - c * g, c * d - a * f],
        [d * hh - e * g, b * g - a * hh, a * e - b * d],
    ])
    det = a * cof[0, 0] + b * cof[1, 0] + c * cof[2, 0]
    if det == 0:
        raise NumericalError("singular moment matrix")
    return cof / det


def _fig_stencil_positions(X, h):
    i0 = np.floor(X[0] / h + 0.5)
    j0 = np.floor(X[1] / h + 0.5)
    di, dj = np.meshgrid([-1, 0, 1], [-1, 0, 1], indexing="ij")
    return np.column_stack([(i0 + di.ravel()) * h, (j0 + dj.ravel()) * h])


def row_sums(X0_values, Y0, alpha=DEFAULT_ALPHA, h=1.0, n=64, extent=8):
    """Per-row sums of the linear-basis shape vector at probes along the line.

    Rows group the 3x3 stencil by boundary-normal offset; each row sum is
    independent of the probe position X0 (this is the lemma behind the
    constancy of F/F*).  Returns an (n_probes, 3) array.
    """
    lat = _line_lattice(h, extent)
    y_line = (lat.counts[1] // 2) * h + Y0
    probes = np.column_stack([np.asarray(X0_values, dtype=float),
                              np.full(len(X0_values), y_line)])
    phi, _, _ = shape_matrix(probes, lat, alpha, LINEAR, gw=0)
    # C-order offsets: axis-1 (normal) offset cycles fastest -> columns k%3
    out = np.empty((len(probes), 3))
    for r, m in enumerate((-1, 0, 1)):
        cols = [k for k in range(9) if (k % 3) - 1 == m]
        out[:, r] = phi[:, cols].sum(axis=1)
    return out


@dataclass(frozen=True)
class InvarianceReport:
    """Executable checks of the straight-boundary constancy properties."""

    basis: str
    alpha: float
    a23_max: float | None       # linear basis only: |(A^-1)[1,2]| over probes
    x0_spread: float            # max-min ratio over probe X0 positions
    h_spread: float             # max-min ratio over h in {0.5, 1, 2}
    a23_pass: bool | None
    x0_pass: bool
    h_pass: bool
    details: dict = field(default_factory=dict, repr=False)

    @property
    def all_pass(self):
        checks = [self.x0_pass, self.h_pass]
        if self.a23_pass is not None:
            checks.append(self.a23_pass)
        return all(checks)


def verify_appendix_invariances(alpha=DEFAULT_ALPHA, basis=LINEAR, Y0=0.3,
                                n=64, tol_a23=1e-12, tol_ratio=1e-10):
    """Check (i) (A^-1)[1,2] = 0, (ii) X0-invariance, (iii) h-invariance.

    Y0 is in units of h. Check (i) applies to the linear basis only; the
    moment matrix is assembled independently and inverted by the explicit
    adjugate formula.
    """
    linear = bool(basis_flag(basis))
    h = 1.0
    probe_xs = np.array([4.0, 4.17, 4.5, 5.111, 5.62]) * h
    a23 = None
    a23_pass = None
    if linear:
        vals = []
        for x0 in probe_xs:
            X = np.array([x0, 4.0 * h + Y0 * h])
            A = moment_matrix(X, _fig_stencil_positions(X, h), alpha, 1.5 * h)
            vals.append(abs(inverse_3x3_adjugate(A)[1, 2]))
        a23 = float(max(vals))
        a23_pass = a23 <= tol_a23
    ratios = straight_line_ratio_profile(Y0 * h, alpha, basis, n, probe_xs, h=h)
    x0_spread = float(ratios.max() - ratios.min())
    hs = np.array([0.5, 1.0, 2.0])
    rh = np.array([straight_line_ratio_numeric(Y0 * hv, alpha, basis, n, h=hv)
                   for hv in hs])
    h_spread = float(rh.max() - rh.min())
    return InvarianceReport(
        basis=basis, alpha=alpha, a23_max=a23,
        x0_spread=x0_spread, h_spread=h_spread,
        a23_pass=a23_pass,
        x0_pass=x0_spread <= tol_ratio,
        h_pass=h_spread <= tol_ratio,
        details={"probe_ratios": ratios, "h_values": hs, "h_ratios": rh},
    )


# ---------------------------------------------------------------------------
# CSV emission

def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        fh.write("# schema=1\n")
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def write_ratio_profile_csv(profile, path):
    _write_csv(path, ["Y0", "ratio"],
               zip(profile.y0.tolist(), profile.ratio.tolist()))


def write_alpha_sweep_csv(sweep, path):
    _write_csv(path, ["alpha", "delta"],
               zip(sweep.alpha.tolist(), sweep.delta.tolist()))


def write_histogram_csv(hist, path):
    _write_csv(path, ["bin_center", "count"],
               zip(hist.bin_centers.tolist(), hist.counts.tolist()))
