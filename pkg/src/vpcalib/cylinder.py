"""Unsteady 2D penalized flow past a rotating cylinder, desk scale.

Polar incompressible Navier-Stokes in the first-order form (u, v, p, q):
radial velocity u, azimuthal velocity v, the modified pressure
p = P + (u^2+v^2)/2 and the scaled vorticity q = r w_z,

    d(ru)/dr + dv/dth                                   = 0
    q - d(rv)/dr + du/dth                               = 0
    r^2 du/dt + (1/Re) dq/dth + r^2 dp/dr               = rvq   - (r^2/eta) G u
    r^2 dv/dt - (1/Re)(r dq/dr - q) + r dp/dth          = -ruq  - (r^2/eta) G (v - r O(t))

on the annulus [R1, R2] x [0, 2pi).  Fourier modes in theta decouple in
the implicit part; each mode solves a banded Keller-box system in r with
viscous, pressure and constraint terms implicit and advection plus the
penalty term explicit.  The nonlinear products are formed at radial cell
midpoints from midpoint-averaged fields, which makes rigid rotation an
exact steady state of the discrete system.

The reference configuration replaces the mask with a no-slip boundary at
r = 1 on the domain [1, R2]; both configurations run through the same
stepper, so a penalized setup whose mask is identically zero on [1, R2]
reproduces the reference run bitwise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .analysis import ErrorReport, error_norms
from .masks import MaskProfile, MaskSpec, eval_mask
from .numerics import SolverError, sinh_graded, concat_grids, trapezoid_weights

DEFAULT_SMOOTH_RATIO = 3.801719108210901  # zero-shift compact erf smoothing per unit eps


class CylinderConfigError(ValueError):
    pass


def ramp_function(t, ramp_time):
    """Smooth 0 -> 1 ramp over [0, ramp_time] built from the compact erf
    profile; exactly 0 at t = 0 and exactly 1 for t >= ramp_time."""
    if ramp_time <= 0:
        raise CylinderConfigError("ramp_time must be positive")
    spec = MaskSpec(MaskProfile("compact_erf", 1.0), 0.0, 1.0)
    return eval_mask(spec, -2.0 * np.asarray(t, dtype=float) / ramp_time + 1.0)


@dataclass(frozen=True)
class CylinderConfig:
    """Desk-scale run configuration.

    ``dt`` defaults to min(dt_max, eta/2): the penalty term is stepped
    explicitly, so stability demands dt below the damping time.  The
    radial grid is built from up to three segments around the mask
    transition; counts are per segment (solid, transition, fluid).
    """

    re: float = 50.0
    eta: float = 1e-3
    spec: MaskSpec = MaskSpec(MaskProfile("discontinuous"), 0.0, 0.0)
    r1: float = 0.1
    r2: float = 10.0
    n_theta: int = 128
    radial_counts: tuple = (96, 32, 136)
    dt: float | None = None
    dt_max: float = 5e-4
    t_end: float = 5.0
    ramp_time: float = 2.0
    rotation_amplitude: float = 1.0
    rotation_frequency: float = 2.0 / math.pi
    scheme: str = "bdf2"
    output_interval: float = 0.05
    snapshot_times: tuple = (2.5, 5.0)
    n_ref: int = 200
    outer_u_bc: Callable | None = None   # (t, theta) -> values; default uniform inflow ramp
    outer_v_bc: Callable | None = None
    omega_fn: Callable | None = None     # overrides the sinusoidal rotation (tests)
    omega_dot_fn: Callable | None = None
    radial_nodes: tuple | None = None    # explicit penalized grid (oracle tests)

    @property
    def eps(self):
        return math.sqrt(self.eta / self.re)

    @property
    def timestep(self):
        if self.dt is not None:
            return self.dt
        return min(self.dt_max, 0.5 * self.eta)

    def omega(self, t):
        if self.omega_fn is not None:
            return self.omega_fn(t)
        return self.rotation_amplitude * math.sin(self.rotation_frequency * t)

    def omega_dot(self, t):
        if self.omega_dot_fn is not None:
            return self.omega_dot_fn(t)
        return (self.rotation_amplitude * self.rotation_frequency
                * math.cos(self.rotation_frequency * t))

    def ramp(self, t):
        return float(ramp_function(t, self.ramp_time))

    def validate(self):
        """Physical-parameter checks for standard penalized runs."""
        spec = self.spec
        c = spec.profile.c if spec.profile.is_compact else 0.0
        reach = abs(spec.shift) + c * spec.delta
        if not self.r1 < 1.0 - reach:
            raise CylinderConfigError("inner radius must sit strictly inside the mask")
        if not self.r2 > 1.0 + reach:
            raise CylinderConfigError("outer radius must sit strictly outside the mask")
        if self.timestep > self.eta:
            raise CylinderConfigError("explicit penalty needs dt < eta")
        if self.scheme not in ("bdf1", "bdf2"):
            raise CylinderConfigError(f"unknown scheme {self.scheme!r}")
        nodes = build_cylinder_grid(self)
        dprime = max(spec.delta, self.eps)
        lo, hi = 1.0 + spec.shift - 3.0 * dprime, 1.0 + spec.shift + 3.0 * dprime
        inside = np.count_nonzero((nodes >= lo) & (nodes <= hi))
        if inside < 8:
            raise CylinderConfigError(
                f"only {inside} radial points across the damping layer; need >= 8")
        return self


def build_cylinder_grid(config):
    """Radial nodes honoring the three-interval structure around the mask.

    Segments [R1, 1+l-d], [1+l-d, 1+l+d], [1+l+d, R2]; the middle segment
    is dropped in the sharp limit d = 0.  Outer segments grade toward the
    transition at the resolved scale max(delta, eps).
    """
    if config.radial_nodes is not None:
        return np.asarray(config.radial_nodes, dtype=float)
    spec = config.spec
    l, d = spec.shift, spec.delta
    scale = max(d, config.eps)
    n1, n2, n3 = config.radial_counts
    lo, hi = 1.0 + l - d, 1.0 + l + d
    if not (config.r1 < lo <= hi < config.r2):
        raise CylinderConfigError("mask transition interval must lie inside the annulus")
    if d == 0.0:
        seg1 = sinh_graded(config.r1, lo, n1 + n2 // 2, center=lo, scale=scale)
        seg3 = sinh_graded(hi, config.r2, n3 + (n2 - n2 // 2), center=hi, scale=scale)
        return concat_grids(seg1, seg3)
    seg1 = sinh_graded(config.r1, lo, n1, center=lo, scale=scale)
    seg2 = np.linspace(lo, hi, n2)
    seg3 = sinh_graded(hi, config.r2, n3, center=hi, scale=scale)
    return concat_grids(seg1, seg2, seg3)


def build_reference_grid(config):
    """Radial nodes for the no-slip reference on [1, R2], wall-clustered."""
    scale = min(0.5, 2.0 / math.sqrt(config.re))
    return sinh_graded(1.0, config.r2, config.n_ref, center=1.0, scale=scale)


@dataclass
class FlowState2D:
    """Spectral snapshot of the four prognostic fields at one time.

    ``spectral`` holds the unnormalized rfft coefficients over theta,
    shaped (n_r, n_modes, 4) in the order (u, v, p, q).
    """

    t: float
    r: np.ndarray
    n_theta: int
    spectral: np.ndarray

    @property
    def theta(self):
        return np.linspace(0.0, 2.0 * math.pi, self.n_theta, endpoint=False)

    def _phys(self, k):
        return np.fft.irfft(self.spectral[:, :, k], n=self.n_theta, axis=1)

    @property
    def u(self):
        return self._phys(0)

    @property
    def v(self):
        return self._phys(1)

    @property
    def p(self):
        return self._phys(2)

    @property
    def q(self):
        return self._phys(3)

    @property
    def pressure(self):
        """True pressure P = p - (u^2 + v^2)/2."""
        u, v = self.u, self.v
        return self.p - 0.5 * (u * u + v * v)

    @property
    def vorticity(self):
        return self.q / self.r[:, None]

    def divergence_residual(self):
        """Midpoint residual of d(ru)/dr + dv/dth, normalized by the larger
        of max|ru| and max|v| so quiescent states stay well defined."""
        r = self.r
        ru = r[:, None] * self.spectral[:, :, 0]
        m = np.arange(self.spectral.shape[1])
        h = np.diff(r)[:, None]
        div = (ru[1:] - ru[:-1]) / h + 1j * m * 0.5 * (
            self.spectral[1:, :, 1] + self.spectral[:-1, :, 1])
        scale = max(np.max(np.abs(ru)), np.max(np.abs(self.spectral[:, :, 1])))
        return float(np.max(np.abs(div)) / max(scale, 1e-300))


@dataclass
class ForceTorqueSeries:
    """Force and torque samples: volume-integral route (fx, fy, torque)
    and surface-stress route (f0x, f0y, t0)."""

    times: np.ndarray
    fx: np.ndarray
    fy: np.ndarray
    torque: np.ndarray
    f0x: np.ndarray
    f0y: np.ndarray
    t0: np.ndarray
    method: str = "volume+surface"

    def to_rows(self):
        for k in range(len(self.times)):
            yield (self.times[k], self.fx[k], self.fy[k], self.torque[k],
                   self.f0x[k], self.f0y[k], self.t0[k])


# ----------------------------------------------------------------------
# The time stepper
# ----------------------------------------------------------------------

class _Engine:
    """Prefactored per-mode implicit operators plus explicit-term state."""

    def __init__(self, config, mode):
        if mode not in ("penalized", "reference"):
            raise CylinderConfigError(f"unknown mode {mode!r}")
        self.config = config
        self.mode = mode
        self.penalized = mode == "penalized"
        self.r = build_cylinder_grid(config) if self.penalized else build_reference_grid(config)
        self.n_r = self.r.size
        self.n_theta = config.n_theta
        self.n_modes = config.n_theta // 2 + 1
        self.dt = config.timestep
        self.theta = np.linspace(0.0, 2.0 * math.pi, self.n_theta, endpoint=False)

        r = self.r
        self.h = np.diff(r)
        self.rbar = 0.5 * (r[:-1] + r[1:])
        self.gamma_mid = (eval_mask(config.spec, self.rbar - 1.0)
                          if self.penalized else np.zeros(self.n_r - 1))
        self.gamma_nodes = (eval_mask(config.spec, r - 1.0)
                            if self.penalized else np.zeros(self.n_r))
        # nonlinear products use only the resolved two-thirds of the modes
        cutoff = int(self.n_theta / 3)
        self.dealias = np.ones(self.n_modes)
        self.dealias[cutoff + 1:] = 0.0
        # modes beyond the dealias cutoff receive no forcing from low-mode
        # boundaries, so they stay identically zero and need no solve
        self.n_active = self.n_modes if self._bc_has_high_modes(cutoff) else cutoff + 1

        self.t = 0.0
        self.step_count = 0
        shape = (self.n_r, self.n_modes)
        self.state = np.zeros(shape + (4,), dtype=complex)
        self.prev_state = None
        self.prev_explicit = None

        self._factors = {}
        for a0 in self._needed_a0():
            self._factors[a0] = self._factor_modes(a0)

    def _bc_has_high_modes(self, cutoff):
        cfg = self.config
        if cfg.outer_u_bc is None and cfg.outer_v_bc is None:
            return False  # uniform-flow ramp forces modes 0 and 1 only
        for frac in (0.0, 0.25, 0.5, 0.75, 1.0):
            u_hat, v_hat, _ = self._bc_values(frac * cfg.t_end)
            tail = max(np.max(np.abs(u_hat[cutoff + 1:])), np.max(np.abs(v_hat[cutoff + 1:])))
            head = max(np.max(np.abs(u_hat)), np.max(np.abs(v_hat)), 1e-300)
            if tail > 1e-12 * head:
                return True
        return False

    # -- operator assembly -------------------------------------------------

    def _needed_a0(self):
        if self.config.scheme == "bdf1":
            return (1.0 / self.dt,)
        return (1.0 / self.dt, 1.5 / self.dt)

    def _factor_modes(self, a0):
        """One real banded LU over the block-diagonal system of all modes.

        Each Fourier mode splits into two decoupled real systems: block A
        holds (Re u, Im v, Re p, Im q) and block B holds (Im u, Re v,
        Im p, Re q); B is A with the mode number negated.  Blocks never
        couple, so the concatenated matrix keeps bandwidth five and a
        single real factorization/solve replaces per-mode complex work.
        """
        from scipy.linalg import get_lapack_funcs

        nb = 4 * self.n_r
        n = nb * 2 * self.n_active
        kl = ku = 5
        re = self.config.re
        h, rb = self.h, self.rbar
        rb2 = rb * rb
        ab = np.zeros((2 * kl + ku + 1, n))
        cells = np.arange(self.n_r - 1)
        ones = np.ones(self.n_r - 1)

        def put(rows, cols, vals):
            ab[kl + ku + rows - cols, cols] += vals

        for block in range(2 * self.n_active):
            mode, is_b = divmod(block, 2)
            mu = -float(mode) if is_b else float(mode)  # signed coupling
            off = nb * block
            base = off + 4 * cells
            rows = off + 2 + 4 * cells
            # divergence: (r a)' - mu*bbar = 0
            put(rows, base + 0, -self.r[:-1] / h)
            put(rows, base + 4, self.r[1:] / h)
            put(rows, base + 1, -0.5 * mu * ones)
            put(rows, base + 5, -0.5 * mu * ones)
            # q definition: dbar - (r b)' + mu*abar = 0
            put(rows + 1, base + 3, 0.5 * ones)
            put(rows + 1, base + 7, 0.5 * ones)
            put(rows + 1, base + 1, self.r[:-1] / h)
            put(rows + 1, base + 5, -self.r[1:] / h)
            put(rows + 1, base + 0, 0.5 * mu * ones)
            put(rows + 1, base + 4, 0.5 * mu * ones)
            # u momentum: a0 r^2 abar - (mu/Re) dbar + r^2 c' = rhs
            put(rows + 2, base + 0, 0.5 * a0 * rb2)
            put(rows + 2, base + 4, 0.5 * a0 * rb2)
            put(rows + 2, base + 3, -0.5 * mu / re * ones)
            put(rows + 2, base + 7, -0.5 * mu / re * ones)
            put(rows + 2, base + 2, -rb2 / h)
            put(rows + 2, base + 6, rb2 / h)
            # v momentum: a0 r^2 bbar - (1/Re)(r d' - dbar) + mu r cbar = rhs
            put(rows + 3, base + 1, 0.5 * a0 * rb2)
            put(rows + 3, base + 5, 0.5 * a0 * rb2)
            put(rows + 3, base + 3, rb / (re * h) + 0.5 / re)
            put(rows + 3, base + 7, -rb / (re * h) + 0.5 / re)
            put(rows + 3, base + 2, 0.5 * mu * rb)
            put(rows + 3, base + 6, 0.5 * mu * rb)
            # boundary rows: inner u, inner v, outer u (mean mode: pressure pin), outer v
            last = off + 4 * (self.n_r - 1)
            ab[kl + ku, off] = 1.0
            ab[kl + ku, off + 1] = 1.0
            if mode == 0:
                ab[kl + ku + (off + nb - 2) - (last + 2), last + 2] = 1.0
            else:
                ab[kl + ku + (off + nb - 2) - (last + 0), last + 0] = 1.0
            ab[kl + ku + (off + nb - 1) - (last + 1), last + 1] = 1.0

        gbtrf, gbtrs = get_lapack_funcs(("gbtrf", "gbtrs"), (ab,))
        lu, piv, info = gbtrf(ab, kl, ku)
        if info != 0:
            raise SolverError(f"cylinder operator factorization failed (info {info})")
        return (lu, piv, gbtrs)

    # -- boundary data -----------------------------------------------------

    def _bc_values(self, t):
        cfg = self.config
        g = cfg.ramp(t)
        if cfg.outer_u_bc is not None:
            u_out = np.asarray(cfg.outer_u_bc(t, self.theta), dtype=float)
        else:
            u_out = g * np.cos(self.theta)
        if cfg.outer_v_bc is not None:
            v_out = np.asarray(cfg.outer_v_bc(t, self.theta), dtype=float)
        else:
            v_out = -g * np.sin(self.theta)
        u_hat = np.fft.rfft(u_out)
        v_hat = np.fft.rfft(v_out)
        omega = cfg.omega(t)
        r_in = self.r[0]
        v_in = np.zeros(self.n_modes, dtype=complex)
        v_in[0] = self.n_theta * r_in * omega
        return u_hat, v_hat, v_in

    # -- explicit terms ------------------------------------------------------

    def _explicit(self, t):
        """Advection and penalty contributions at radial midpoints, spectral."""
        cfg = self.config
        sp_mid = 0.5 * (self.state[1:] + self.state[:-1])
        u_m = np.fft.irfft(sp_mid[:, :, 0], n=self.n_theta, axis=1)
        v_m = np.fft.irfft(sp_mid[:, :, 1], n=self.n_theta, axis=1)
        q_m = np.fft.irfft(sp_mid[:, :, 3], n=self.n_theta, axis=1)
        rb = self.rbar[:, None]
        adv_u = np.fft.rfft(rb * v_m * q_m, axis=1) * self.dealias
        adv_v = np.fft.rfft(-rb * u_m * q_m, axis=1) * self.dealias

        rb2 = (self.rbar * self.rbar)[:, None]
        pen = (self.gamma_mid / cfg.eta)[:, None]
        e_u = adv_u - rb2 * pen * sp_mid[:, :, 0]
        v_slip = sp_mid[:, :, 1].copy()
        v_slip[:, 0] -= self.n_theta * self.rbar * cfg.omega(t)
        e_v = adv_v - rb2 * pen * v_slip
        return e_u, e_v

    # -- single step ---------------------------------------------------------

    def step(self):
        cfg = self.config
        dt = self.dt
        t_new = self.t + dt
        bdf2 = cfg.scheme == "bdf2" and self.prev_state is not None

        explicit = self._explicit(self.t)
        if bdf2:
            a0 = 1.5 / dt
            hist_u = (2.0 * self.state[:, :, 0] - 0.5 * self.prev_state[:, :, 0]) / dt
            hist_v = (2.0 * self.state[:, :, 1] - 0.5 * self.prev_state[:, :, 1]) / dt
            ex_u = 2.0 * explicit[0] - self.prev_explicit[0]
            ex_v = 2.0 * explicit[1] - self.prev_explicit[1]
        else:
            a0 = 1.0 / dt
            hist_u = self.state[:, :, 0] / dt
            hist_v = self.state[:, :, 1] / dt
            ex_u, ex_v = explicit

        rb2 = (self.rbar * self.rbar)[:, None]
        rhs_u = rb2 * 0.5 * (hist_u[1:] + hist_u[:-1]) + ex_u
        rhs_v = rb2 * 0.5 * (hist_v[1:] + hist_v[:-1]) + ex_v

        # rows per block: [bc_u_in, bc_v_in, (div, qdef, umom, vmom) per cell,
        # bc_u_out (pressure gauge for the mean mode), bc_v_out]; block A of a
        # mode carries (Re u, Im v, Re p, Im q), block B the complement
        nb = 4 * self.n_r
        na = self.n_active
        rhs = np.zeros((na, 2, nb))
        rhs[:, 0, 4::4] = rhs_u.T[:na].real
        rhs[:, 0, 5::4] = rhs_v.T[:na].imag
        rhs[:, 1, 4::4] = rhs_u.T[:na].imag
        rhs[:, 1, 5::4] = rhs_v.T[:na].real

        u_hat, v_hat, v_in = self._bc_values(t_new)
        rhs[:, 0, 1] = v_in[:na].imag
        rhs[:, 1, 1] = v_in[:na].real
        rhs[:, 0, nb - 2] = u_hat[:na].real
        rhs[:, 1, nb - 2] = u_hat[:na].imag
        rhs[0, :, nb - 2] = 0.0  # mean-mode rows are the pressure gauge
        rhs[:, 0, nb - 1] = v_hat[:na].imag
        rhs[:, 1, nb - 1] = v_hat[:na].real

        lu, piv, gbtrs = self._factors[a0]
        x, info = gbtrs(lu, 5, 5, rhs.reshape(-1), piv)
        if info != 0:
            raise SolverError(f"cylinder solve failed (info {info})")
        xa = x.reshape(na, 2, self.n_r, 4)
        new_state = np.zeros_like(self.state)
        new_state[:, :na, 0] = (xa[:, 0, :, 0] + 1j * xa[:, 1, :, 0]).T
        new_state[:, :na, 1] = (xa[:, 1, :, 1] + 1j * xa[:, 0, :, 1]).T
        new_state[:, :na, 2] = (xa[:, 0, :, 2] + 1j * xa[:, 1, :, 2]).T
        new_state[:, :na, 3] = (xa[:, 1, :, 3] + 1j * xa[:, 0, :, 3]).T

        if not np.all(np.isfinite(new_state.view(float))):
            raise SolverError(f"cylinder step produced non-finite values at t={t_new}")

        self.prev_state = self.state
        self.prev_explicit = explicit
        self.state = new_state
        self.t = t_new
        self.step_count += 1

    # -- views ----------------------------------------------------------------

    def snapshot(self):
        return FlowState2D(self.t, self.r.copy(), self.n_theta, self.state.copy())


def step_imex(state, config, mode="penalized"):
    """Advance a FlowState2D one time step.

    Convenience wrapper building a fresh engine; loops should use
    ``run_case``, which keeps the prefactored operators alive.
    """
    engine = _Engine(config, mode)
    if state is not None:
        if state.spectral.shape != engine.state.shape:
            raise CylinderConfigError("state does not match the configured grid")
        engine.state = state.spectral.copy()
        engine.t = state.t
    engine.step()
    return engine.snapshot()


# ----------------------------------------------------------------------
# Forces and torques
# ----------------------------------------------------------------------

def _dr_weights(r, i):
    """One-sided/centered 2nd-order first-derivative weights at node i."""
    n = r.size
    if i == 0:
        h0, h1 = r[1] - r[0], r[2] - r[1]
        return (0, 1, 2), (-(2 * h0 + h1) / (h0 * (h0 + h1)),
                           (h0 + h1) / (h0 * h1),
                           -h0 / (h1 * (h0 + h1)))
    if i == n - 1:
        h0, h1 = r[-2] - r[-3], r[-1] - r[-2]
        return (n - 3, n - 2, n - 1), (h1 / (h0 * (h0 + h1)),
                                       -(h0 + h1) / (h0 * h1),
                                       (2 * h1 + h0) / (h1 * (h0 + h1)))
    hm, hp = r[i] - r[i - 1], r[i + 1] - r[i]
    return (i - 1, i, i + 1), (-hp / (hm * (hm + hp)),
                               (hp - hm) / (hm * hp),
                               hm / (hp * (hm + hp)))


class SurfaceForce(tuple):
    """(f0x, f0y, t0) with a flag recording off-grid interpolation."""

    def __new__(cls, f0x, f0y, t0, interpolated=False):
        obj = super().__new__(cls, (f0x, f0y, t0))
        obj.interpolated = interpolated
        return obj

    f0x = property(lambda self: self[0])
    f0y = property(lambda self: self[1])
    t0 = property(lambda self: self[2])


def surface_force_torque(state, r_eval, re):
    """Surface-stress force and torque at radius ``r_eval``.

    Integrates the normal and tangential stress components azimuthally
    using the true pressure; theta integration is the uniform trapezoid
    (spectrally exact for periodic data).
    """
    r = state.r
    i = int(np.argmin(np.abs(r - r_eval)))
    interpolated = abs(r[i] - r_eval) > 1e-12 * max(1.0, abs(r_eval))
    u, v = state.u, state.v
    press = state.pressure
    idx, wts = _dr_weights(r, i)
    du_dr = sum(w * u[j] for j, w in zip(idx, wts))
    dv_dr = sum(w * v[j] for j, w in zip(idx, wts))
    m = np.arange(state.spectral.shape[1])
    du_dth = np.fft.irfft(1j * m * np.fft.rfft(u[i]), n=state.n_theta)
    theta = state.theta
    rr = r[i]
    sigma_rr = -press[i] + (2.0 / re) * du_dr
    sigma_rt = (du_dth + rr * dv_dr - v[i]) / (re * rr)
    dth = 2.0 * math.pi / state.n_theta
    f0x = float(np.sum(rr * (np.cos(theta) * sigma_rr - np.sin(theta) * sigma_rt)) * dth)
    f0y = float(np.sum(rr * (np.sin(theta) * sigma_rr + np.cos(theta) * sigma_rt)) * dth)
    t0 = float(np.sum(rr * rr * sigma_rt) * dth)
    return SurfaceForce(f0x, f0y, t0, interpolated)


def volume_force_torque(state, config, omega=None, omega_dot=None):
    """Force/torque from the damping-term volume integrals.

    Adds the rotational-acceleration moment over [R1, 1] (torque only)
    and the stress on the interior no-slip boundary at R1.
    """
    if omega is None:
        omega = config.omega(state.t)
    if omega_dot is None:
        omega_dot = config.omega_dot(state.t)
    r = state.r
    gamma = eval_mask(config.spec, r - 1.0)
    u, v = state.u, state.v
    v_slip = v - r[:, None] * omega
    w_r = trapezoid_weights(r)
    dth = 2.0 * math.pi / state.n_theta
    theta = state.theta
    pen = (gamma / config.eta)[:, None]
    fx = np.sum(w_r[:, None] * r[:, None] * pen
                * (np.cos(theta) * u - np.sin(theta) * v_slip)) * dth
    fy = np.sum(w_r[:, None] * r[:, None] * pen
                * (np.sin(theta) * u + np.cos(theta) * v_slip)) * dth
    torque = np.sum(w_r[:, None] * (r * r)[:, None] * pen * v_slip) * dth
    accel = 0.5 * math.pi * omega_dot * (1.0 - config.r1 ** 4)
    f0 = surface_force_torque(state, r[0], config.re)
    return SurfaceForce(float(fx) + f0.f0x, float(fy) + f0.f0y,
                        float(torque) + accel + f0.t0, f0.interpolated)


def acceleration_torque_correction(omega_dot, r1):
    """Closed-form moment of the rigid angular acceleration over [r1, 1]:
    2 pi omega_dot (1 - r1^4) / 4.  Enters the torque only."""
    return 0.5 * math.pi * omega_dot * (1.0 - r1 ** 4)


# ----------------------------------------------------------------------
# Case driver
# ----------------------------------------------------------------------

@dataclass
class CaseResult:
    config: CylinderConfig
    mode: str
    final: FlowState2D
    forces: ForceTorqueSeries
    snapshots: dict
    divergence_max: float


def run_case(config, mode="penalized", progress=None):
    """Time-step a configuration to t_end, sampling forces and snapshots.

    Forces are sampled every ``output_interval`` (both the volume and the
    surface route for penalized runs; the surface route at r = 1 fills
    both slots for reference runs).  Snapshots are taken at the
    configured times; the final state is always included.
    """
    engine = _Engine(config, mode)
    dt = engine.dt
    n_steps = int(round(config.t_end / dt))
    if abs(n_steps * dt - config.t_end) > 1e-9 * config.t_end:
        raise CylinderConfigError("t_end must be an integer number of steps")
    sample_every = max(1, int(round(config.output_interval / dt)))
    snap_steps = {int(round(ts / dt)) for ts in config.snapshot_times}

    times, rows = [], []
    snapshots = {}
    div_max = 0.0

    def sample():
        state = engine.snapshot()
        t = engine.t
        if mode == "penalized":
            vol = volume_force_torque(state, config)
            f0 = surface_force_torque(state, engine.r[0], config.re)
        else:
            f0 = surface_force_torque(state, 1.0, config.re)
            vol = f0
        times.append(t)
        rows.append((vol[0], vol[1], vol[2], f0[0], f0[1], f0[2]))
        return state

    sample()  # t = 0
    for k in range(1, n_steps + 1):
        engine.step()
        if k % sample_every == 0 or k == n_steps:
            state = sample()
            div_max = max(div_max, state.divergence_residual())
            if progress is not None:
                progress(engine.t, config.t_end)
            if k in snap_steps:
                snapshots[round(engine.t, 12)] = state
    final = engine.snapshot()
    snapshots.setdefault(round(engine.t, 12), final)

    arr = np.array(rows, dtype=float)
    series = ForceTorqueSeries(np.array(times), arr[:, 0], arr[:, 1], arr[:, 2],
                               arr[:, 3], arr[:, 4], arr[:, 5])
    return CaseResult(config, mode, final, series, snapshots, div_max)


# ----------------------------------------------------------------------
# Field comparison
# ----------------------------------------------------------------------

FIELD_NAMES = ("u", "v", "P", "omega_z")


def field_errors(penalized, reference, r_lo=1.0, r_hi=10.0):
    """E1/Einf of (u, v, P, omega_z) over the comparison annulus.

    The penalized fields are interpolated radially onto the reference
    nodes with cubic splines; the annulus measure uses r dr dtheta.
    """
    from scipy.interpolate import CubicSpline

    if penalized.n_theta != reference.n_theta:
        raise ValueError("theta grids differ; comparison needs matching modes")
    mask = (reference.r >= r_lo - 1e-12) & (reference.r <= r_hi + 1e-12)
    r_cmp = reference.r[mask]
    pen_mask = (penalized.r >= r_cmp[0]) & (penalized.r <= r_cmp[-1])
    same_grid = (np.count_nonzero(pen_mask) == r_cmp.size
                 and np.array_equal(penalized.r[pen_mask], r_cmp))
    e1, einf = {}, {}
    w_r = trapezoid_weights(r_cmp) * r_cmp
    weights = np.broadcast_to(w_r[:, None], (r_cmp.size, reference.n_theta))
    for name in FIELD_NAMES:
        pen = _field(penalized, name)
        ref = _field(reference, name)
        if same_grid:
            pen_on_ref = pen[pen_mask]
        else:
            pen_on_ref = CubicSpline(penalized.r, pen, axis=0)(r_cmp)
        e1[name], einf[name] = error_norms(pen_on_ref, ref[mask], weights)
    return ErrorReport(e1, einf, measure=float(np.sum(weights) * 2 * math.pi / reference.n_theta))


def _field(state, name):
    if name == "u":
        return state.u
    if name == "v":
        return state.v
    if name == "P":
        return state.pressure
    if name == "omega_z":
        return state.vorticity
    raise KeyError(name)


def normalized_error_field(penalized, reference, r_lo=1.0, r_hi=10.0, name="u"):
    """(pen - ref)/Einf on the reference grid restricted to the annulus."""
    from scipy.interpolate import CubicSpline

    mask = (reference.r >= r_lo - 1e-12) & (reference.r <= r_hi + 1e-12)
    r_cmp = reference.r[mask]
    pen = CubicSpline(penalized.r, _field(penalized, name), axis=0)(r_cmp)
    diff = pen - _field(reference, name)[mask]
    scale = np.max(np.abs(diff))
    return diff / max(scale, 1e-300), float(scale)


# ----------------------------------------------------------------------
# Snapshot persistence: flat binary, float64 header then fields
# ----------------------------------------------------------------------

_SNAPSHOT_VERSION = 1.0


def write_snapshot(path, state):
    """Header (version, time, n_r, n_theta, r_first, r_last, n_fields, 0)
    as float64, then the radial nodes, then row-major physical fields
    (u, v, p, q)."""
    fields = np.stack([state.u, state.v, state.p, state.q])
    header = np.array([_SNAPSHOT_VERSION, state.t, state.r.size, state.n_theta,
                       state.r[0], state.r[-1], fields.shape[0], 0.0])
    with open(path, "wb") as fh:
        header.tofile(fh)
        state.r.astype(float).tofile(fh)
        fields.astype(float).tofile(fh)


def read_snapshot(path):
    raw = np.fromfile(path, dtype=float)
    version, t, n_r, n_theta = raw[0], raw[1], int(raw[2]), int(raw[3])
    if version != _SNAPSHOT_VERSION:
        raise ValueError(f"unsupported snapshot version {version}")
    n_fields = int(raw[6])
    r = raw[8:8 + n_r]
    body = raw[8 + n_r:].reshape(n_fields, n_r, n_theta)
    spectral = np.empty((n_r, n_theta // 2 + 1, 4), dtype=complex)
    for k in range(4):
        spectral[:, :, k] = np.fft.rfft(body[k], axis=1)
    return FlowState2D(float(t), r.copy(), n_theta, spectral)
