import math

import numpy as np
import pytest
import scipy.special

from vpcalib.calibration import (
    CALIBRATION_OPTIONS,
    EULER_GAMMA,
    ZERO_SHIFT_CONSTANTS,
    CalibrationError,
    calibration_sweep,
    default_inner_window,
    digamma,
    riccati_optimal_shift,
    solve_inner_bvp,
    tanh_offset_analytic,
    tanh_zero_shift_analytic,
    zero_shift_smoothing,
    zero_shift_table,
)
from vpcalib.masks import DISCONTINUOUS, ERF, TANH, MaskProfile, MaskSpec

ALL_SMOOTH = [TANH, ERF, MaskProfile("compact_tanh", 1.0), MaskProfile("compact_erf", 1.0)]


# ----------------------------------------------------------------------
# digamma and the analytic tanh offset
# ----------------------------------------------------------------------

def test_digamma_against_scipy():
    for x in (0.05, 0.3, 0.662, 1.0, 2.5, 7.0, 11.9, 13.0, 40.0):
        assert digamma(x) == pytest.approx(float(scipy.special.digamma(x)), abs=1e-12)


def test_digamma_domain():
    with pytest.raises(ValueError):
        digamma(0.0)
    with pytest.raises(ValueError):
        digamma(-1.0)


def test_offset_at_one_is_half():
    # psi(1) = -gamma exactly, so sigma(1) = 1/2
    assert tanh_offset_analytic(1.0) == pytest.approx(0.5, abs=1e-13)


def test_offset_root_location():
    assert tanh_offset_analytic(0.662057) == pytest.approx(0.0, abs=1e-5)


def test_analytic_matches_riccati_route():
    analytic = tanh_zero_shift_analytic()
    riccati = zero_shift_smoothing(TANH)
    assert abs(analytic - riccati) < 1e-6
    # the coarse published rounding of the constant is consistent at 1e-5
    assert analytic == pytest.approx(2.648228, abs=1e-5)


# ----------------------------------------------------------------------
# Riccati fast path
# ----------------------------------------------------------------------

def test_riccati_sharp_limit_recovers_unit_shift():
    for profile in ALL_SMOOTH:
        shift = riccati_optimal_shift(profile, 1e-6)
        assert shift == pytest.approx(1.0, abs=1e-5), profile.label()


def test_riccati_zero_at_calibrated_smoothing():
    shift = riccati_optimal_shift(TANH, ZERO_SHIFT_CONSTANTS["tanh"])
    assert abs(shift) < 1e-8


def test_riccati_rejects_bad_inputs():
    with pytest.raises(CalibrationError):
        riccati_optimal_shift(TANH, -1.0)
    with pytest.raises(CalibrationError):
        riccati_optimal_shift(DISCONTINUOUS, 1.0)


def test_zero_shift_constants_two_route_frozen():
    """The four calibration constants, frozen from two independent
    routes (tight Riccati integration, and the closed-form digamma root
    for tanh) that agree to ~1e-10."""
    table = zero_shift_table()
    for label, target in ZERO_SHIFT_CONSTANTS.items():
        assert table[label] == pytest.approx(target, abs=2e-9), label


def test_calibration_curve_monotone_and_bracketed():
    # The curves decrease from 1 through zero at delta*; by delta = 6 the
    # steepest family (tanh) has fallen to -2.85, so the sanity envelope
    # over the full sweep is [-3, 2] (and [-1, 2] holds up to delta ~ 3.9).
    deltas = np.geomspace(0.01, 6.0, 25)
    for profile in ALL_SMOOTH:
        rows = calibration_sweep(profile, deltas)
        shifts = [r.optimal_shift for r in rows]
        assert all(s1 >= s2 - 1e-9 for s1, s2 in zip(shifts, shifts[1:])), profile.label()
        assert all(-3.0 <= s <= 2.0 for s in shifts)
        assert all(-1.0 <= s <= 2.0 for s, d in zip(shifts, deltas) if d <= 3.5)


# ----------------------------------------------------------------------
# direct boundary-layer BVP
# ----------------------------------------------------------------------

def test_inner_bvp_sharp_mask_displacement():
    spec = MaskSpec(DISCONTINUOUS, 0.0, 0.0)
    lo, hi = default_inner_window(spec)
    sol = solve_inner_bvp(spec, lo, hi, 4000)
    assert sol.displacement == pytest.approx(-1.0, abs=1e-5)
    xi = sol.grid.nodes
    exact = np.where(xi < 0.0, np.exp(xi), 1.0 + xi)
    assert np.max(np.abs(sol.values - exact)) < 1e-5


def test_inner_bvp_shifted_mask_zero_displacement():
    spec = MaskSpec(DISCONTINUOUS, 1.0, 0.0)
    lo, hi = default_inner_window(spec)
    sol = solve_inner_bvp(spec, lo, hi, 4000)
    assert abs(sol.displacement) < 1e-5
    xi = sol.grid.nodes
    exact = np.where(xi < 1.0, np.exp(xi - 1.0), xi)
    assert np.max(np.abs(sol.values - exact)) < 1e-5


def test_inner_bvp_tanh_calibrated_smoothing():
    spec = MaskSpec(TANH, 0.0, ZERO_SHIFT_CONSTANTS["tanh"])
    lo, hi = default_inner_window(spec)
    sol = solve_inner_bvp(spec, lo, hi, 6000)
    assert abs(sol.displacement) < 1e-6


def test_inner_solution_invariants():
    spec = MaskSpec(ERF, 0.0, 1.0)
    lo, hi = default_inner_window(spec)
    sol = solve_inner_bvp(spec, lo, hi, 3000)
    u = sol.values
    assert np.all(u[1:-1] > 0.0)
    assert abs(u[0]) < 1e-8 * u[-1]  # exponential decay into the solid
    # far-field second derivative vanishes (graded-grid 3-point stencil)
    xi = sol.grid.nodes
    idx = np.where(xi > xi[-1] - 2.0)[0][1:-1]
    hm = xi[idx] - xi[idx - 1]
    hp = xi[idx + 1] - xi[idx]
    d2 = (2 * u[idx - 1] / (hm * (hm + hp)) - 2 * u[idx] / (hm * hp)
          + 2 * u[idx + 1] / (hp * (hm + hp)))
    assert np.max(np.abs(d2)) < 1e-6
    # decay amplitude is a finite positive diagnostic
    assert 0.0 < sol.decay_amplitude < 10.0


@pytest.mark.parametrize("profile", ALL_SMOOTH, ids=lambda p: p.label())
@pytest.mark.parametrize("delta", [0.5, 1.0, 2.0, 4.0])
def test_riccati_consistent_with_bvp(profile, delta):
    spec = MaskSpec(profile, 0.0, delta)
    lo, hi = default_inner_window(spec)
    sol = solve_inner_bvp(spec, lo, hi, 6000)
    shift = riccati_optimal_shift(profile, delta)
    assert shift == pytest.approx(-sol.displacement, abs=1e-6)


def test_shift_linearity():
    base = MaskSpec(DISCONTINUOUS, 0.0, 0.0)
    d0 = solve_inner_bvp(base, -17.0, 17.0, 3000).displacement
    for shift in (0.5, 1.25):
        spec = MaskSpec(DISCONTINUOUS, shift, 0.0)
        d = solve_inner_bvp(spec, -17.0 + shift, 17.0 + shift, 3000).displacement
        assert d - d0 == pytest.approx(shift, abs=1e-8)


def test_inner_bvp_window_validation():
    spec = MaskSpec(TANH, 0.0, 2.0)
    with pytest.raises(ValueError):
        solve_inner_bvp(spec, -4.0, 4.0, 1000)  # mask not saturated
    with pytest.raises(ValueError):
        solve_inner_bvp(spec, -40.0, 40.0, 100)  # too few nodes
