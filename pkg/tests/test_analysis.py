"""Straight-boundary attenuation theory: ratios, sweeps, histograms."""

import numpy as np
import pytest

from mlsibm.analysis import (
    closed_form_ratio_const_basis,
    delta_ratio_sweep,
    inverse_3x3_adjugate,
    moment_matrix,
    ratio_histogram,
    ratio_profile,
    rotated_line_ratios,
    row_sums,
    straight_line_ratio_numeric,
    straight_line_ratio_profile,
    verify_appendix_invariances,
    write_alpha_sweep_csv,
    write_histogram_csv,
    write_ratio_profile_csv,
)
from mlsibm.errors import ConfigError, NumericalError

# dense-quadrature values of F/F* for a unit-force straight line, frozen
# after checking convergence in the marker density n
RATIO_ON_GRIDLINE = 2.3710778994389394
RATIO_MID_CELL = 2.13031337380945


def test_line_ratio_anchors():
    assert straight_line_ratio_numeric(0.0) == pytest.approx(
        RATIO_ON_GRIDLINE, rel=1e-12)
    assert straight_line_ratio_numeric(0.5) == pytest.approx(
        RATIO_MID_CELL, rel=1e-12)
    # anchors themselves sit where the theory says: ~2.37 and ~2.13
    assert abs(RATIO_ON_GRIDLINE - 2.37) < 0.01
    assert abs(RATIO_MID_CELL - 2.13) < 0.01


def test_ratio_constant_along_the_line():
    probes = np.array([3.9, 4.0, 4.33, 5.01, 5.55])
    for y0 in (0.0, 0.21, 0.5):
        r = straight_line_ratio_profile(y0, 2.0 / 3.0, "linear", 64, probes)
        assert r.max() - r.min() < 1e-10


def test_rotated_line_breaks_constancy():
    r = rotated_line_ratios(25.0)
    assert r.max() - r.min() > 0.02


def test_closed_form_matches_numeric(rng):
    for _ in range(6):
        y0 = float(rng.uniform(-0.5, 0.5))
        alpha = float(rng.uniform(0.45, 0.95))
        cf = closed_form_ratio_const_basis(y0, alpha)
        num = straight_line_ratio_numeric(y0, alpha, basis="constant", n=256)
        assert abs(cf - num) / num < 1e-6


def test_profile_delta_and_alpha_minimum():
    prof = ratio_profile()
    assert abs(prof.delta - 0.24) < 0.02
    sweep = delta_ratio_sweep(np.round(np.arange(0.40, 1.0001, 0.025), 10))
    assert 0.55 <= sweep.argmin_alpha <= 0.65
    # variation grows away from the optimum in both directions
    assert sweep.delta[0] > sweep.delta.min()
    assert sweep.delta[-1] > sweep.delta.min()


def test_row_sums_probe_invariant():
    rs = row_sums([4.0, 4.2, 4.77, 5.3, 5.94], 0.3)
    assert np.ptp(rs, axis=0).max() < 1e-12
    assert np.allclose(rs.sum(axis=1), 1.0, atol=1e-12)


def test_moment_inverse_adjugate(rng):
    for _ in range(10):
        X = rng.uniform(3.0, 5.0, size=2)
        pos = X + rng.uniform(-1.2, 1.2, size=(9, 2))
        A = moment_matrix(X, pos, 2.0 / 3.0, 1.5)
        inv = inverse_3x3_adjugate(A)
        assert np.allclose(inv, np.linalg.inv(A), rtol=1e-9, atol=1e-12)


def test_appendix_invariances_both_bases():
    rep = verify_appendix_invariances(basis="linear")
    assert rep.all_pass
    assert rep.a23_max is not None and rep.a23_max <= 1e-12
    rep_c = verify_appendix_invariances(basis="constant")
    assert rep_c.all_pass
    assert rep_c.a23_max is None


# ---------------------------------------------------------------------------
# ratio histogram

def _hist_inputs(ratios):
    ratios = np.asarray(ratios, dtype=float)
    F = np.column_stack([ratios, np.zeros_like(ratios)])
    G = np.column_stack([np.ones_like(ratios), np.zeros_like(ratios)])
    return F, G


def test_histogram_unimodal(rng):
    r = rng.normal(2.35, 0.08, size=4000)
    hist = ratio_histogram(*_hist_inputs(r))
    assert hist.single_peaked()
    assert abs(hist.peak - 2.35) < 0.1
    assert hist.frac_within > 0.95
    assert hist.n_counted == 4000 and hist.n_excluded == 0


def test_histogram_bimodal(rng):
    r = np.concatenate([rng.normal(1.6, 0.04, 2000),
                        rng.normal(2.9, 0.04, 2000)])
    hist = ratio_histogram(*_hist_inputs(r))
    assert not hist.single_peaked()


def test_histogram_degenerate_single_value():
    hist = ratio_histogram(*_hist_inputs(np.full(50, 2.0)))
    assert hist.single_peaked()
    assert abs(hist.peak - 2.0) < 0.05
    assert hist.frac_within == 1.0


def test_histogram_exclusions():
    F, G = _hist_inputs([2.0, 2.1, 2.2, 1e-14])
    G[2, 0] = 0.0           # received nothing
    hist = ratio_histogram(F, G)
    assert hist.n_counted == 2
    assert hist.n_excluded == 2

    with pytest.raises(ConfigError):
        ratio_histogram(F, G[:3])
    with pytest.raises(NumericalError):
        ratio_histogram(*_hist_inputs([0.0, 0.0]))


def test_csv_writers(tmp_path):
    prof = ratio_profile(y0_steps=4)
    write_ratio_profile_csv(prof, tmp_path / "prof.csv")
    sweep = delta_ratio_sweep([0.5, 0.6, 0.7], y0_steps=4)
    write_alpha_sweep_csv(sweep, tmp_path / "sweep.csv")
    hist = ratio_histogram(*_hist_inputs([2.0, 2.1, 2.3]))
    write_histogram_csv(hist, tmp_path / "hist.csv")
    for name, nrows in (("prof.csv", 4), ("sweep.csv", 3), ("hist.csv", 64)):
        lines = (tmp_path / name).read_text().strip().splitlines()
        assert lines[0].startswith("# schema=")
        assert len(lines) == nrows + 2         # schema comment + header + data
