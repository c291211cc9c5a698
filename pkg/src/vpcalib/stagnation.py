"""Penalized viscous stagnation-point flow.

Symmetry reduces the 2D flow to one third-order nonlinear ODE for the
similarity profile u(x): u' is the tangential velocity factor and u the
signed normal flux, so

    u'''/Re + u u'' - u'^2 + 1 = (mask/eta) u'

with no-slip u = u' = 0 at the wall.  Damping the tangential velocity
inside the solid makes this the minimal problem exhibiting the
Reynolds-dependent intermediate/strong damping regimes.

Discretization is a Keller box (midpoint) scheme on the first-order
system (u, u', u''): second-order accurate, bandwidth five, and the mask
is only ever sampled at cell midpoints so a node-aligned jump needs no
special casing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .analysis import error_norms
from .fields import Solution1D
from .masks import MaskSpec, eval_mask
from .numerics import (
    BandedMatrix,
    Grid1D,
    NonConvergenceError,
    SolveOptions,
    concat_grids,
    newton_solve,
    sinh_graded,
    trapezoid_weights,
)

NEWTON_OPTIONS = SolveOptions(abs_tol=1e-10, rel_tol=1e-10, max_iter=60)


@dataclass(frozen=True)
class StagnationProblem:
    """Penalized configuration; intended boundary at x = 0, wall BCs at
    x = -1, far field at x_max."""

    re: float
    eta: float
    spec: MaskSpec
    x_max: float = 10.0
    n: int = 1600

    def __post_init__(self):
        if self.re <= 0:
            raise ValueError("Re must be positive")
        if not (0.0 < self.eta < 1.0):
            raise ValueError("eta must lie in (0, 1)")
        if self.eps >= 0.3:
            raise ValueError(f"eps = {self.eps:.3g} too large; need eps < 0.3")
        if self.x_max < 10.0:
            raise ValueError("x_max must be at least 10")
        if self.n < 800:
            raise ValueError("need at least 800 grid points")

    @property
    def eps(self):
        return math.sqrt(self.eta / self.re)


# ----------------------------------------------------------------------
# Keller-box residual/jacobian for  u'''/Re + u u'' - u'^2 + 1 = damping u'
# ----------------------------------------------------------------------

class _BoxSystem:
    """First-order system (u, w = u', s = u'') on a fixed grid.

    Unknowns interleave per node; cell equations live at midpoints and
    the damping coefficient gamma/eta is sampled there, which is exact
    for sharp masks whose jump falls on a node.
    """

    def __init__(self, nodes, re, damping_mid, bc_right_slope=1.0):
        self.nodes = np.asarray(nodes, dtype=float)
        self.re = re
        self.h = np.diff(self.nodes)
        self.damping = np.asarray(damping_mid, dtype=float)  # gamma/eta at midpoints
        self.n = self.nodes.size
        self.bc_right_slope = bc_right_slope

    def unpack(self, x):
        return x[0::3], x[1::3], x[2::3]

    def pack(self, u, w, s):
        x = np.empty(3 * self.n)
        x[0::3], x[1::3], x[2::3] = u, w, s
        return x

    def residual(self, x):
        u, w, s = self.unpack(x)
        h = self.h
        ub = 0.5 * (u[:-1] + u[1:])
        wb = 0.5 * (w[:-1] + w[1:])
        sb = 0.5 * (s[:-1] + s[1:])
        r = np.empty(3 * self.n)
        r[0] = u[0]
        r[1] = w[0]
        cells = slice(2, 3 * self.n - 1)
        block = np.empty((self.n - 1, 3))
        block[:, 0] = (u[1:] - u[:-1]) / h - wb
        block[:, 1] = (w[1:] - w[:-1]) / h - sb
        block[:, 2] = ((s[1:] - s[:-1]) / (h * self.re) + ub * sb - wb * wb
                       + 1.0 - self.damping * wb)
        r[cells] = block.reshape(-1)
        r[-1] = w[-1] - self.bc_right_slope
        return r

    def jacobian(self, x):
        u, w, s = self.unpack(x)
        h = self.h
        ub = 0.5 * (u[:-1] + u[1:])
        wb = 0.5 * (w[:-1] + w[1:])
        sb = 0.5 * (s[:-1] + s[1:])
        J = BandedMatrix(3 * self.n, kl=4, ku=3)
        data, ku = J.data, J.ku

        def put(rows, cols, vals):
            data[ku + rows - cols, cols] += vals

        n1 = self.n - 1
        i = np.arange(n1)
        rows = 2 + 3 * i
        cu, cw, cs = 3 * i, 3 * i + 1, 3 * i + 2  # node i columns

        # continuity of u: du/dx - wb = 0
        put(rows, cu, -1.0 / h)
        put(rows, cu + 3, 1.0 / h)
        put(rows, cw, np.full(n1, -0.5))
        put(rows, cw + 3, np.full(n1, -0.5))
        # continuity of w: dw/dx - sb = 0
        put(rows + 1, cw, -1.0 / h)
        put(rows + 1, cw + 3, 1.0 / h)
        put(rows + 1, cs, np.full(n1, -0.5))
        put(rows + 1, cs + 3, np.full(n1, -0.5))
        # momentum at midpoint
        put(rows + 2, cu, 0.5 * sb)
        put(rows + 2, cu + 3, 0.5 * sb)
        put(rows + 2, cw, -wb - 0.5 * self.damping)
        put(rows + 2, cw + 3, -wb - 0.5 * self.damping)
        put(rows + 2, cs, 0.5 * ub - 1.0 / (h * self.re))
        put(rows + 2, cs + 3, 0.5 * ub + 1.0 / (h * self.re))

        J.set_row(0, {0: 1.0})
        J.set_row(1, {1: 1.0})
        J.set_row(3 * self.n - 1, {3 * self.n - 2: 1.0})
        return J


def _reference_grid(re, x_max, n):
    # resolve the viscous layer ~ Re^-1/2 at the wall
    w = min(0.5, 1.0 / math.sqrt(re))
    return sinh_graded(0.0, x_max, n, center=0.0, scale=w)


def _penalized_grid(problem):
    eps = problem.eps
    spec = problem.spec
    w = max(spec.delta, eps)
    n_solid = max(200, problem.n // 5)
    n_fluid = problem.n - n_solid
    # solid side: damping layers at the wall (x = -1) and the interface
    half = max(8, n_solid // 2)
    left = sinh_graded(-1.0, -0.5, half, center=-1.0, scale=eps)
    mid = sinh_graded(-0.5, min(0.0, spec.shift), n_solid - half + 1,
                      center=min(0.0, spec.shift), scale=w)
    solid = concat_grids(left, mid)
    # fluid side: interface scale w blending into the viscous scale
    fluid = sinh_graded(min(0.0, spec.shift), problem.x_max, n_fluid + 1,
                        center=min(0.0, spec.shift), scale=w)
    return concat_grids(solid, fluid)


def _initial_guess(nodes, re):
    # u ~ x - (1 - e^{-kx})/k in the fluid with the viscous scale k = sqrt(Re);
    # u'' tapers smoothly into the solid so no stencil sees a jump
    k = math.sqrt(re)
    x = np.asarray(nodes, dtype=float)
    pos = np.maximum(x, 0.0)
    u = pos - (1.0 - np.exp(-k * pos)) / k
    w = 1.0 - np.exp(-k * pos)
    s = k * np.exp(-k * pos) * np.exp(np.minimum(x, 0.0) * 4.0 * k)
    return u, w, s


def stagnation_reference(re, x_max=10.0, n=1600, opts=NEWTON_OPTIONS, grid=None):
    """No-slip reference: boundary conditions replace the damping at x = 0."""
    nodes = _reference_grid(re, x_max, n) if grid is None else np.asarray(grid, float)
    system = _BoxSystem(nodes, re, np.zeros(nodes.size - 1))
    u, w, s = _initial_guess(nodes, re)
    x0 = system.pack(u, w, s)
    x, _ = newton_solve(system.residual, system.jacobian, x0, opts)
    u, w, s = system.unpack(x)
    sol = Solution1D(Grid1D(nodes, trapezoid_weights(nodes)), u)
    return sol, (w, s)


def stagnation_penalized(problem, opts=NEWTON_OPTIONS, guess=None, n_continuation=None):
    """Penalized solve on [-1, x_max] with wall conditions at x = -1.

    Stiff (small eta) cases are reached by continuation: eta descends by
    decades from a mild start, each converged state seeding the next.
    """
    nodes = _penalized_grid(problem)
    mid = 0.5 * (nodes[:-1] + nodes[1:])
    gamma_mid = eval_mask(problem.spec, mid)

    if guess is None:
        u, w, s = _initial_guess(nodes, problem.re)
        x0 = np.empty(3 * nodes.size)
        x0[0::3], x0[1::3], x0[2::3] = u, w, s
        etas = _continuation_ladder(problem.eta) if n_continuation is None else n_continuation
    else:
        x0 = np.interp(nodes, guess[0], guess[1][0::3])
        w0 = np.interp(nodes, guess[0], guess[1][1::3])
        s0 = np.interp(nodes, guess[0], guess[1][2::3])
        packed = np.empty(3 * nodes.size)
        packed[0::3], packed[1::3], packed[2::3] = x0, w0, s0
        x0 = packed
        etas = [problem.eta]

    x = x0
    for eta in etas:
        system = _BoxSystem(nodes, problem.re, gamma_mid / eta)
        x, _ = newton_solve(system.residual, system.jacobian, x, opts)
    u = x[0::3]
    sol = Solution1D(Grid1D(nodes, trapezoid_weights(nodes)), u)
    return sol, (nodes, x)


def _continuation_ladder(eta_target, eta_start=0.2):
    if eta_target >= eta_start:
        return [eta_target]
    n_steps = int(math.ceil(math.log10(eta_start / eta_target)))
    etas = list(np.geomspace(eta_start, eta_target, n_steps + 1))
    etas[-1] = eta_target
    return etas


def fluid_errors(problem, penalized, reference=None):
    """E1/Einf of the normal velocity over the fluid region (0, x_max].

    The reference is solved on the penalized grid's fluid subset so the
    comparison needs no interpolation.
    """
    nodes = penalized.grid.nodes
    fluid = nodes >= 0.0
    x = nodes[fluid]
    if reference is None:
        reference, _ = stagnation_reference(problem.re, problem.x_max,
                                            max(800, x.size), grid=x)
    w = trapezoid_weights(x)
    return error_norms(penalized.values[fluid], reference.values, w)


@dataclass(frozen=True)
class RegimeRow:
    re: float
    eta: float
    eps: float
    mask: str
    e1: float
    einf: float
    error: str = ""


def stagnation_regime_sweep(re_list, eta_list, rules, x_max=10.0, n=1600):
    """Error table over (Re, eta, mask); eta descends per (Re, mask) so each
    converged solve seeds the next stiffer one."""
    rows = []
    for re in re_list:
        ref_cache = {}
        for rule in rules:
            guess = None
            for eta in sorted(eta_list, reverse=True):
                eps = math.sqrt(eta / re)
                name = rule.name()
                try:
                    spec = rule.spec(eps)
                    problem = StagnationProblem(re, eta, spec, x_max=x_max, n=n)
                    sol, state = stagnation_penalized(problem, guess=guess)
                    guess = state
                    key = tuple(np.round(sol.grid.nodes[sol.grid.nodes >= 0.0][:5], 12))
                    if key not in ref_cache:
                        x = sol.grid.nodes[sol.grid.nodes >= 0.0]
                        ref_cache[key], _ = stagnation_reference(re, x_max, x.size, grid=x)
                    e1, einf = fluid_errors(problem, sol, ref_cache[key])
                    rows.append(RegimeRow(re, eta, eps, name, e1, einf))
                except (ValueError, NonConvergenceError) as exc:
                    rows.append(RegimeRow(re, eta, math.sqrt(eta / re), name,
                                          float("nan"), float("nan"), error=str(exc)))
                    guess = None
    return rows
