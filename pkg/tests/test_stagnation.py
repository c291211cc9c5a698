import math

import numpy as np
import pytest
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

from vpcalib.masks import DISCONTINUOUS, MaskSpec, parse_mask
from vpcalib.numerics import banded_lu, banded_lu_solve, newton_solve, SolveOptions
from vpcalib.stagnation import (
    NEWTON_OPTIONS,
    StagnationProblem,
    _BoxSystem,
    _initial_guess,
    _reference_grid,
    fluid_errors,
    stagnation_penalized,
    stagnation_reference,
    stagnation_regime_sweep,
)


def hiemenz_wall_curvature(x_max=10.0):
    """Independent shooting oracle for the no-slip similarity profile:
    integrate u''' = u'^2 - u u'' - 1 and pick u''(0) so u'(x_max) = 1."""
    def mismatch(s):
        sol = solve_ivp(lambda x, y: [y[1], y[2], y[1] ** 2 - y[0] * y[2] - 1.0],
                        (0.0, x_max), [0.0, 0.0, s], rtol=1e-11, atol=1e-13)
        return sol.y[1, -1] - 1.0

    return brentq(mismatch, 1.2, 1.3, xtol=1e-12)


def test_reference_matches_shooting_oracle():
    oracle = hiemenz_wall_curvature()
    assert oracle == pytest.approx(1.2325876568, abs=1e-8)
    sol, (w, s) = stagnation_reference(1.0, 10.0, 1600)
    assert s[0] == pytest.approx(oracle, abs=1e-4)


def test_reference_reynolds_scaling():
    # u(x) = f(sqrt(Re) x)/sqrt(Re) maps Re=1 onto any Re, so the wall
    # curvature scales as sqrt(Re)
    oracle = hiemenz_wall_curvature()
    sol, (w, s) = stagnation_reference(100.0, 10.0, 2000)
    assert s[0] == pytest.approx(10.0 * oracle, rel=2e-4)


def test_reference_far_field():
    sol, (w, s) = stagnation_reference(1.0, 10.0, 1600)
    assert w[-1] == 1.0  # imposed exactly
    # linear far field: vanishing second derivative, u ~ x - const
    assert abs(s[-1]) < 1e-6
    x = sol.grid.nodes
    drift = (sol.values[-1] - x[-1]) - (sol.values[-2] - x[-2])
    assert abs(drift) < 1e-8


def test_penalized_zero_mask_reproduces_reference():
    # same discrete system: zero damping plus reference closures is the
    # reference solve, bitwise
    nodes = _reference_grid(1.0, 10.0, 1200)
    system = _BoxSystem(nodes, 1.0, np.zeros(nodes.size - 1))
    u, w, s = _initial_guess(nodes, 1.0)
    x0 = system.pack(u, w, s)
    x1, _ = newton_solve(system.residual, system.jacobian, x0, NEWTON_OPTIONS)
    ref, _ = stagnation_reference(1.0, 10.0, 1200)
    np.testing.assert_array_equal(x1[0::3], ref.values)


def test_penalized_strong_damping_errors():
    prob = StagnationProblem(1.0, 1e-2, MaskSpec(DISCONTINUOUS, 0.0, 0.0))
    pen, _ = stagnation_penalized(prob)
    e1, einf = fluid_errors(prob, pen)
    assert prob.eps == pytest.approx(0.1)
    # standard mask: O(eps) error with an O(1) constant
    assert 0.02 < e1 < 0.5
    shifted = StagnationProblem(1.0, 1e-2, MaskSpec(DISCONTINUOUS, prob.eps, 0.0))
    pen2, _ = stagnation_penalized(shifted)
    e1b, _ = fluid_errors(shifted, pen2)
    assert e1 / e1b > 4.0  # displacement correction removes the O(eps) part


def test_near_boundary_parabolicity():
    # u and u' vanish at the effective boundary to O(eps^2) and O(eps).
    # The eps^2 constant carries both the displacement response (~sqrt(Re))
    # and the pressure-driven solid flow (~Re, since eta = Re eps^2);
    # measured constants are 1.1 Re + 2 sqrt(Re), frozen with 4x margin.
    for re, eta in ((1.0, 1e-2), (100.0, 1e-3)):
        prob = StagnationProblem(re, eta, MaskSpec(DISCONTINUOUS, 0.0, 0.0))
        pen, (nodes, state) = stagnation_penalized(prob)
        i0 = int(np.argmin(np.abs(nodes)))
        u0 = abs(pen.values[i0])
        w0 = abs(state[1::3][i0])
        assert u0 < 4.0 * (re + math.sqrt(re)) * prob.eps ** 2
        assert w0 < 4.0 * math.sqrt(re) * prob.eps


def test_jacobian_matches_finite_differences():
    rng = np.random.default_rng(11)
    prob = StagnationProblem(1.0, 1e-2, MaskSpec(DISCONTINUOUS, 0.0, 0.0), n=800)
    pen, (nodes, state) = stagnation_penalized(prob)
    from vpcalib.masks import eval_mask

    mid = 0.5 * (nodes[:-1] + nodes[1:])
    system = _BoxSystem(nodes, prob.re, eval_mask(prob.spec, mid) / prob.eta)
    for trial in range(3):
        x = state + 0.05 * rng.standard_normal(state.size) * (np.abs(state) + 1.0)
        if trial == 0:
            x = state  # converged state itself
        J = system.jacobian(x)
        r0 = system.residual(x)
        cols = rng.integers(0, x.size, size=12)
        for j in cols:
            step = 1e-7 * max(1.0, abs(x[j]))
            xp = x.copy(); xp[j] += step
            xm = x.copy(); xm[j] -= step
            fd = (system.residual(xp) - system.residual(xm)) / (2 * step)
            # column j has nonzero rows i with -ku <= i - j <= kl
            lo = max(0, j - J.ku)
            hi = min(x.size - 1, j + J.kl)
            col = np.zeros(x.size)
            for i in range(lo, hi + 1):
                col[i] = J.data[J.ku + i - j, j]
            scale = max(np.max(np.abs(fd)), 1.0)
            assert np.max(np.abs(col - fd)) / scale < 1e-5


def test_grid_independence():
    prob_a = StagnationProblem(1.0, 1e-3, MaskSpec(DISCONTINUOUS, 0.0, 0.0), n=1600)
    prob_b = StagnationProblem(1.0, 1e-3, MaskSpec(DISCONTINUOUS, 0.0, 0.0), n=3200)
    e1 = []
    for prob in (prob_a, prob_b):
        pen, _ = stagnation_penalized(prob)
        e1.append(fluid_errors(prob, pen)[0])
    assert abs(e1[0] - e1[1]) / e1[1] < 0.01


def test_regime_sweep_rows_and_failures():
    rules = [parse_mask("discontinuous,0,0")]
    etas = [1e-1, 1e-2, 1e-3, 1e-4]
    rows = stagnation_regime_sweep([1.0], etas, rules, n=900)
    assert len(rows) == 4
    # eta = 1e-1 at Re = 1 gives eps > 0.3 and must be annotated, not raised
    failed = [r for r in rows if r.error]
    assert len(failed) == 1 and failed[0].eta == pytest.approx(1e-1)
    good = [r for r in rows if not r.error]
    assert all(r.e1 <= r.einf for r in good)


def test_problem_validation():
    with pytest.raises(ValueError):
        StagnationProblem(1.0, 1e-1, MaskSpec(DISCONTINUOUS, 0.0, 0.0))  # eps too big
    with pytest.raises(ValueError):
        StagnationProblem(-1.0, 1e-3, MaskSpec(DISCONTINUOUS, 0.0, 0.0))
    with pytest.raises(ValueError):
        StagnationProblem(1.0, 1e-3, MaskSpec(DISCONTINUOUS, 0.0, 0.0), x_max=5.0)
    with pytest.raises(ValueError):
        StagnationProblem(1.0, 1e-3, MaskSpec(DISCONTINUOUS, 0.0, 0.0), n=100)
