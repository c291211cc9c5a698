"""Shared deterministic numerical kernels.

Adaptive Runge-Kutta initial value integration, banded linear boundary
value solves, damped Newton iteration, bracketed root finding, and
quadrature-weighted grids.  Every routine here is a pure function of its
inputs: repeat calls with identical arguments return bitwise identical
results, and nothing holds shared mutable state.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import get_lapack_funcs
from scipy.optimize import brentq


class SolverError(Exception):
    """Base class for numerical kernel failures."""


class IntegrationError(SolverError):
    """Adaptive step size underflowed; carries the last valid abscissa."""

    def __init__(self, message, last_z):
        super().__init__(message)
        self.last_z = last_z


class SingularMatrixError(SolverError):
    """Banded factorization hit an exactly zero pivot."""

    def __init__(self, pivot_index):
        super().__init__(f"singular banded matrix: zero pivot at index {pivot_index}")
        self.pivot_index = pivot_index


class NonConvergenceError(SolverError):
    """Newton iteration ran out of iterations; carries the final iterate."""

    def __init__(self, message, residual_norm, iterate):
        super().__init__(message)
        self.residual_norm = residual_norm
        self.iterate = iterate


class BracketError(ValueError):
    """Root bracket endpoints do not straddle a sign change."""


@dataclass(frozen=True)
class SolveOptions:
    """Tolerances shared by the iterative kernels."""

    abs_tol: float = 1e-12
    rel_tol: float = 1e-10
    max_iter: int = 100

    def __post_init__(self):
        if self.abs_tol <= 0 or self.rel_tol <= 0:
            raise ValueError("tolerances must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")


DEFAULT_OPTIONS = SolveOptions()


# ----------------------------------------------------------------------
# Grids and quadrature
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class Grid1D:
    """Strictly increasing nodes with matching positive quadrature weights."""

    nodes: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        weights = np.asarray(self.weights, dtype=float)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "weights", weights)
        if nodes.ndim != 1 or nodes.size < 2:
            raise ValueError("need at least two nodes")
        if np.any(np.diff(nodes) <= 0):
            raise ValueError("nodes must be strictly increasing")
        if weights.shape != nodes.shape or np.any(weights <= 0):
            raise ValueError("weights must be positive and match nodes")
        length = nodes[-1] - nodes[0]
        if abs(weights.sum() - length) > 1e-12 * length:
            raise ValueError("weights must sum to the domain length")

    @property
    def n(self):
        return self.nodes.size

    @property
    def length(self):
        return self.nodes[-1] - self.nodes[0]

    def integrate(self, values):
        return float(np.dot(self.weights, np.asarray(values, dtype=float)))

    @classmethod
    def from_nodes(cls, nodes):
        """Trapezoid weights on an arbitrary strictly increasing node set."""
        return cls(np.asarray(nodes, dtype=float), trapezoid_weights(nodes))

    @classmethod
    def uniform(cls, a, b, n, rule="trapezoid"):
        nodes = np.linspace(a, b, n)
        if rule == "trapezoid":
            return cls(nodes, trapezoid_weights(nodes))
        if rule == "simpson":
            return cls(nodes, simpson_weights(nodes))
        raise ValueError(f"unknown quadrature rule {rule!r}")


def trapezoid_weights(nodes):
    nodes = np.asarray(nodes, dtype=float)
    h = np.diff(nodes)
    w = np.zeros_like(nodes)
    w[:-1] += 0.5 * h
    w[1:] += 0.5 * h
    return w


def simpson_weights(nodes):
    """Composite Simpson weights; requires a uniform grid with odd node count."""
    nodes = np.asarray(nodes, dtype=float)
    n = nodes.size
    if n < 3 or n % 2 == 0:
        raise ValueError("Simpson rule needs an odd number of nodes")
    h = np.diff(nodes)
    if not np.allclose(h, h[0], rtol=1e-12, atol=0):
        raise ValueError("Simpson rule needs uniform spacing")
    w = np.full(n, 2.0)
    w[1::2] = 4.0
    w[0] = w[-1] = 1.0
    return w * (h[0] / 3.0)


def sinh_graded(a, b, n, center, scale):
    """Nodes on [a, b] geometrically clustered around ``center``.

    Node spacing is ~``scale`` near the center and grows smoothly away from
    it (uniform in asinh coordinates), so second-order stencils keep clean
    convergence.  If the center lies strictly inside (a, b) it is included
    as a node exactly.
    """
    if not (a < b):
        raise ValueError("need a < b")
    if scale <= 0:
        raise ValueError("scale must be positive")
    sa = math.asinh((a - center) / scale)
    sb = math.asinh((b - center) / scale)
    if center <= a or center >= b:
        s = np.linspace(sa, sb, n)
        x = center + scale * np.sinh(s)
    else:
        # split point counts in proportion to stretched arc length
        n_left = max(2, int(round(n * (-sa) / (sb - sa))))
        n_left = min(n_left, n - 1)
        left = center + scale * np.sinh(np.linspace(sa, 0.0, n_left))
        right = center + scale * np.sinh(np.linspace(0.0, sb, n - n_left + 1))
        left[-1] = center
        right[0] = center
        x = np.concatenate([left, right[1:]])
    x[0], x[-1] = a, b  # snap endpoints against asinh/sinh roundoff
    return x


def concat_grids(*segments):
    """Concatenate node segments, deduplicating shared interface nodes."""
    parts = [np.asarray(segments[0], dtype=float)]
    for seg in segments[1:]:
        seg = np.asarray(seg, dtype=float)
        if abs(seg[0] - parts[-1][-1]) > 1e-12:
            raise ValueError("segments must share interface nodes")
        parts.append(seg[1:])
    return np.concatenate(parts)


# ----------------------------------------------------------------------
# Adaptive embedded Runge-Kutta (Dormand-Prince 5(4)) for scalar ODEs
# ----------------------------------------------------------------------

# Butcher tableau, classic DP coefficients
_A21 = 1 / 5
_A31, _A32 = 3 / 40, 9 / 40
_A41, _A42, _A43 = 44 / 45, -56 / 15, 32 / 9
_A51, _A52, _A53, _A54 = 19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729
_A61, _A62, _A63, _A64, _A65 = 9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656
_B1, _B3, _B4, _B5, _B6 = 35 / 384, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84
# 5th-order minus embedded 4th-order weights (error estimate)
_E1, _E3, _E4, _E5, _E6, _E7 = (
    71 / 57600, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40,
)
_C2, _C3, _C4, _C5 = 1 / 5, 3 / 10, 4 / 5, 8 / 9


def integrate_ivp(rhs, y0, z0, z1, opts=DEFAULT_OPTIONS, max_steps=1_000_000):
    """Integrate the scalar ODE y' = rhs(z, y) from z0 to z1, returning y(z1).

    Uses an adaptive Dormand-Prince 5(4) pair; local error per step is held
    below ``opts.abs_tol + opts.rel_tol * |y|``.  Raises IntegrationError
    when the step size underflows (stiff blow-up), reporting the last valid
    abscissa.
    """
    if not z1 > z0:
        raise ValueError("need z1 > z0")
    atol, rtol = opts.abs_tol, opts.rel_tol
    z, y = float(z0), float(y0)
    k1 = rhs(z, y)
    if not math.isfinite(k1):
        raise IntegrationError("rhs not finite at initial point", z)
    h = min(z1 - z0, 0.1 * (atol + rtol * abs(y)) ** 0.2 + 1e-6)
    steps = 0
    while z < z1:
        if h < 1e-14 * max(abs(z), 1.0):
            raise IntegrationError("step size underflow", z)
        if steps >= max_steps:
            raise IntegrationError("step budget exhausted", z)
        h = min(h, z1 - z)
        k2 = rhs(z + _C2 * h, y + h * (_A21 * k1))
        k3 = rhs(z + _C3 * h, y + h * (_A31 * k1 + _A32 * k2))
        k4 = rhs(z + _C4 * h, y + h * (_A41 * k1 + _A42 * k2 + _A43 * k3))
        k5 = rhs(z + _C5 * h, y + h * (_A51 * k1 + _A52 * k2 + _A53 * k3 + _A54 * k4))
        k6 = rhs(z + h, y + h * (_A61 * k1 + _A62 * k2 + _A63 * k3 + _A64 * k4 + _A65 * k5))
        y_new = y + h * (_B1 * k1 + _B3 * k3 + _B4 * k4 + _B5 * k5 + _B6 * k6)
        k7 = rhs(z + h, y_new)  # FSAL stage
        err = h * (_E1 * k1 + _E3 * k3 + _E4 * k4 + _E5 * k5 + _E6 * k6 + _E7 * k7)
        tol = atol + rtol * max(abs(y), abs(y_new))
        ratio = abs(err) / tol
        if not math.isfinite(y_new):
            raise IntegrationError("solution blew up", z)
        if ratio <= 1.0:
            z += h
            y = y_new
            k1 = k7
            steps += 1
            grow = 5.0 if ratio == 0.0 else min(5.0, 0.9 * ratio ** -0.2)
            h *= grow
        else:
            h *= max(0.2, 0.9 * ratio ** -0.2)
    return y


# ----------------------------------------------------------------------
# Banded linear algebra
# ----------------------------------------------------------------------

class BandedMatrix:
    """Square banded matrix in diagonal-ordered storage.

    ``data[ku + i - j, j]`` holds entry (i, j) for ``-kl <= i - j <= ku``.
    Row replacement (boundary closures) and matrix-vector products are
    supported; factorization goes through LAPACK ``gbtrf``/``gbtrs`` so a
    singular system reports its zero pivot index.
    """

    def __init__(self, n, kl, ku, dtype=float):
        self.n = n
        self.kl = kl
        self.ku = ku
        self.data = np.zeros((kl + ku + 1, n), dtype=dtype)

    def add(self, i, j, value):
        self.data[self.ku + i - j, j] += value

    def set_row(self, i, entries):
        """Replace row i with the given {column: coefficient} mapping."""
        lo = max(0, i - self.kl)
        hi = min(self.n - 1, i + self.ku)
        for j in range(lo, hi + 1):
            self.data[self.ku + i - j, j] = 0.0
        for j, v in entries.items():
            if not (-self.kl <= i - j <= self.ku):
                raise ValueError("entry outside band")
            self.data[self.ku + i - j, j] = v

    def matvec(self, x):
        x = np.asarray(x)
        y = np.zeros(self.n, dtype=np.result_type(self.data, x))
        for d in range(-self.kl, self.ku + 1):
            if d >= 0:
                band = self.data[self.ku - d, d:]
                y[: self.n - d] += band * x[d:]
            else:
                band = self.data[self.ku - d, : self.n + d]
                y[-d:] += band * x[: self.n + d]
        return y

    def to_lapack(self):
        """Expand to the gbtrf layout with kl extra fill rows on top."""
        ab = np.zeros((2 * self.kl + self.ku + 1, self.n), dtype=self.data.dtype)
        ab[self.kl:, :] = self.data
        return ab


def banded_lu(matrix):
    """LU-factorize a BandedMatrix; returns an opaque handle for solves."""
    ab = matrix.to_lapack()
    (gbtrf,) = get_lapack_funcs(("gbtrf",), (ab,))
    lu, ipiv, info = gbtrf(ab, matrix.kl, matrix.ku)
    if info > 0:
        raise SingularMatrixError(info - 1)
    if info < 0:
        raise SolverError(f"gbtrf illegal argument {-info}")
    return (lu, ipiv, matrix.kl, matrix.ku)


def banded_lu_solve(factor, rhs):
    lu, ipiv, kl, ku = factor
    (gbtrs,) = get_lapack_funcs(("gbtrs",), (lu,))
    b = np.asarray(rhs, dtype=lu.dtype)
    x, info = gbtrs(lu, kl, ku, b, ipiv)
    if info != 0:
        raise SolverError(f"gbtrs failed with info={info}")
    return x


def solve_banded_bvp(matrix, rhs, bc_rows=None, opts=DEFAULT_OPTIONS):
    """Solve a banded linear BVP ``A x = rhs`` and verify the residual.

    ``bc_rows`` is an optional sequence of boundary closures
    ``(row, {column: coefficient}, value)`` that replace the listed
    equations before solving.  The returned solution always satisfies
    ``||A x - rhs||_inf / ||rhs||_inf < opts.rel_tol``; violations raise
    SolverError, a zero pivot raises SingularMatrixError naming its index.
    """
    b = np.array(rhs, dtype=matrix.data.dtype)
    if b.shape != (matrix.n,):
        raise ValueError("rhs length mismatch")
    if bc_rows:
        for row, entries, value in bc_rows:
            matrix.set_row(row, entries)
            b[row] = value
    # row equilibration: scales away the 1/h^2 spread between stencil and
    # closure rows so the residual check is a meaningful backward error
    row_max = np.zeros(matrix.n)
    for d in range(-matrix.kl, matrix.ku + 1):
        if d >= 0:
            band = np.abs(matrix.data[matrix.ku - d, d:])
            row_max[: matrix.n - d] = np.maximum(row_max[: matrix.n - d], band)
        else:
            band = np.abs(matrix.data[matrix.ku - d, : matrix.n + d])
            row_max[-d:] = np.maximum(row_max[-d:], band)
    scale = np.where(row_max > 0.0, row_max, 1.0)
    for d in range(-matrix.kl, matrix.ku + 1):
        if d >= 0:
            matrix.data[matrix.ku - d, d:] /= scale[: matrix.n - d]
        else:
            matrix.data[matrix.ku - d, : matrix.n + d] /= scale[-d:]
    b = b / scale
    factor = banded_lu(matrix)
    x = banded_lu_solve(factor, b)
    resid = matrix.matvec(x) - b
    bnorm = np.max(np.abs(b))
    rnorm = np.max(np.abs(resid))
    if bnorm == 0.0:
        if rnorm > opts.abs_tol:
            raise SolverError(f"homogeneous residual {rnorm:.3e} above abs_tol")
    elif rnorm / bnorm >= opts.rel_tol:
        raise SolverError(f"relative residual {rnorm / bnorm:.3e} above rel_tol")
    return x


# ----------------------------------------------------------------------
# Damped Newton iteration
# ----------------------------------------------------------------------

def newton_solve(residual, jacobian, guess, opts=DEFAULT_OPTIONS, max_halvings=30):
    """Solve residual(x) = 0 by Newton iteration with backtracking damping.

    ``jacobian(x)`` must return a BandedMatrix consistent with
    ``residual(x)``.  Steps are halved (up to ``max_halvings``) until the
    residual norm decreases.  Returns ``(x, iterations)``; raises
    NonConvergenceError carrying the final residual norm and iterate.
    """
    x = np.array(guess, dtype=float)
    r = np.asarray(residual(x), dtype=float)
    rnorm = np.max(np.abs(r))
    if rnorm < opts.abs_tol:
        return x, 0
    for iteration in range(1, opts.max_iter + 1):
        J = jacobian(x)
        try:
            dx = banded_lu_solve(banded_lu(J), -r)
        except SingularMatrixError:
            raise NonConvergenceError("singular jacobian", rnorm, x)
        lam = 1.0
        for _ in range(max_halvings + 1):
            x_new = x + lam * dx
            r_new = np.asarray(residual(x_new), dtype=float)
            new_norm = np.max(np.abs(r_new))
            if math.isfinite(new_norm) and new_norm < rnorm:
                break
            lam *= 0.5
        else:
            raise NonConvergenceError("line search stalled", rnorm, x)
        x, r, rnorm = x_new, r_new, new_norm
        if rnorm < opts.abs_tol:
            return x, iteration
    raise NonConvergenceError("Newton iteration budget exhausted", rnorm, x)


# ----------------------------------------------------------------------
# Bracketed root finding
# ----------------------------------------------------------------------

def find_root_bracketed(f, a, b, opts=DEFAULT_OPTIONS):
    """Find a root of f on [a, b]; requires a sign change over the bracket.

    Brent iteration refined to near machine precision in the abscissa; the
    result additionally satisfies ``|f(root)| < opts.abs_tol``.
    """
    fa, fb = f(a), f(b)
    if fa == 0.0:
        return a
    if fb == 0.0:
        return b
    if fa * fb > 0:
        raise BracketError(f"no sign change on [{a}, {b}]: f(a)={fa:.3e}, f(b)={fb:.3e}")
    root = brentq(f, a, b, xtol=1e-14, rtol=4 * np.finfo(float).eps, maxiter=200)
    fr = f(root)
    if abs(fr) >= opts.abs_tol:
        raise SolverError(f"root residual {fr:.3e} above abs_tol")
    return float(root)
