"""Error metrics, Richardson extrapolation, regime and cost classification.

Pure post-processing: everything here is a deterministic function of its
arguments and safe to apply row-by-row across sweep outputs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


class AnalysisError(ValueError):
    pass


# ----------------------------------------------------------------------
# Penalty parameters and damping regimes
# ----------------------------------------------------------------------

REGIME_INVALID_TIME = "invalid_time"
REGIME_INVALID_LENGTH = "invalid_length"
REGIME_INTERMEDIATE = "intermediate"
REGIME_STRONG = "strong"


@dataclass(frozen=True)
class PenaltyParams:
    """Reynolds number, damping time scale, derived damping length, and
    the damping regime they land in."""

    re: float
    eta: float
    eps: float
    regime: str

    def to_dict(self):
        return {"re": self.re, "eta": self.eta, "eps": self.eps, "regime": self.regime}


def classify_regime(re, eta):
    """Classify (Re, eta) into a damping regime.

    eta >= 1 damps too slowly (invalid_time); eps >= 1 cannot overcome
    viscosity (invalid_length).  Otherwise the time scale dominates when
    eta > eps > 1/Re (intermediate) and the length scale dominates when
    1/Re >= eps >= eta (strong); equality boundaries are assigned to
    strong so the partition is deterministic.
    """
    if re <= 0 or eta <= 0:
        raise AnalysisError("Re and eta must be positive")
    eps = math.sqrt(eta / re)
    if eta >= 1.0:
        regime = REGIME_INVALID_TIME
    elif eps >= 1.0:
        regime = REGIME_INVALID_LENGTH
    elif eta > 1.0 / re:  # equivalent to eta > eps and eps > 1/Re
        regime = REGIME_INTERMEDIATE
    else:
        regime = REGIME_STRONG
    return PenaltyParams(re, eta, eps, regime)


# ----------------------------------------------------------------------
# Error norms
# ----------------------------------------------------------------------

@dataclass
class ErrorReport:
    """Per-variable average (E1) and worst-case (Einf) errors, with
    optional force/torque deviation series."""

    e1: dict
    einf: dict
    delta_force: dict = field(default_factory=dict)
    measure: float = 0.0

    def to_dict(self):
        out = {"E1": self.e1, "Einf": self.einf, "measure": self.measure}
        if self.delta_force:
            out["delta_force"] = {k: list(map(float, v)) for k, v in self.delta_force.items()}
        return out


def error_norms(field_values, reference, weights):
    """Region-averaged L1 and pointwise Linf error between two fields.

    ``weights`` are quadrature weights over the comparison region; the L1
    norm is normalized by the region measure (the weight sum).
    """
    f = np.asarray(field_values, dtype=float)
    g = np.asarray(reference, dtype=float)
    w = np.asarray(weights, dtype=float)
    if f.shape != g.shape or f.shape != w.shape:
        raise AnalysisError("fields and weights must share a grid")
    if w.size == 0 or w.sum() <= 0:
        raise AnalysisError("empty comparison region")
    diff = np.abs(f - g)
    e1 = float(np.sum(w * diff) / np.sum(w))
    einf = float(np.max(diff))
    return e1, einf


# ----------------------------------------------------------------------
# Richardson extrapolation
# ----------------------------------------------------------------------

def richardson(x_i, eta_i, x_j, eta_j):
    """Cancel the leading O(eta) error between two solutions.

    Elementwise over arrays/series: (X_i/eta_i - X_j/eta_j) divided by
    (1/eta_i - 1/eta_j).  Exact on any input affine in eta.
    """
    if eta_i <= 0 or eta_j <= 0:
        raise AnalysisError("eta values must be positive")
    if eta_i == eta_j:
        raise AnalysisError("eta values must differ")
    xi = np.asarray(x_i, dtype=float)
    xj = np.asarray(x_j, dtype=float)
    out = (xi / eta_i - xj / eta_j) / (1.0 / eta_i - 1.0 / eta_j)
    return float(out) if out.ndim == 0 else out


# ----------------------------------------------------------------------
# Cost scaling regimes
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class CostRegime:
    """Cost scaling branch for damping eta = Re^-alpha in 3D turbulence.

    ``eta_exponent`` and ``re_exponent`` give the total cost scaling
    C ~ eta^a * Re^b; the binding resolution scales are recorded too.
    """

    alpha_range: str
    eta_exponent: float
    re_exponent: float
    length_scale: str
    time_scale: str

    @property
    def cost(self):
        if self.eta_exponent == 0:
            return f"Re^{self.re_exponent:g}"
        return f"eta^{self.eta_exponent:g} * Re^{self.re_exponent:g}"


_COST_BRANCHES = (
    (0.5, CostRegime("alpha <= 1/2", 0.0, 3.0, "kolmogorov", "cfl")),
    (0.75, CostRegime("1/2 < alpha <= 3/4", -1.5, 0.75, "damping", "cfl")),
    (1.0, CostRegime("3/4 < alpha <= 1", -2.5, 1.5, "damping", "damping")),
    (math.inf, CostRegime("alpha > 1", -2.5, 1.5, "damping", "damping")),
)


def cost_regime(re, alpha):
    """Cost scaling branch for eta = Re^-alpha; boundary alphas join the
    smaller-alpha branch."""
    if re <= 1:
        raise AnalysisError("cost regimes assume Re > 1")
    if alpha <= 0:
        raise AnalysisError("alpha must be positive")
    for upper, regime in _COST_BRANCHES:
        if alpha <= upper:
            return regime
    raise AssertionError("unreachable")


def effort_to_halve(dimensions, alpha):
    """Total effort factor to halve the error when error ~ eps^alpha and
    effort ~ eps^-(D+2)."""
    if dimensions not in (1, 2, 3):
        raise AnalysisError("dimensions must be 1, 2, or 3")
    if alpha <= 0:
        raise AnalysisError("alpha must be positive")
    return 2.0 ** ((dimensions + 2) / alpha)


# ----------------------------------------------------------------------
# Convergence slope fitting
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class SlopeFit:
    slope: float
    intercept: float
    residual: float
    excluded: tuple = ()

    def to_dict(self):
        return {
            "slope": self.slope,
            "intercept": self.intercept,
            "residual": self.residual,
            "excluded": list(self.excluded),
        }


def fit_slope(pairs, drop_leveraged_endpoint=True):
    """Least-squares slope of log y against log x.

    Asymptotic convergence claims hold only for small parameters, so when
    the largest-x point's residual exceeds twice the mean absolute
    residual it is excluded and the fit repeated; exclusions are reported
    in the result.
    """
    pts = [(float(x), float(y)) for x, y in pairs]
    if len(pts) < 3:
        raise AnalysisError("need at least three pairs")
    if any(x <= 0 or y <= 0 for x, y in pts):
        raise AnalysisError("log-log fit needs positive values")
    lx = np.log(np.array([p[0] for p in pts]))
    ly = np.log(np.array([p[1] for p in pts]))

    def do_fit(ix):
        slope, intercept = np.polyfit(lx[ix], ly[ix], 1)
        resid = ly[ix] - (slope * lx[ix] + intercept)
        return slope, intercept, resid

    all_ix = np.arange(len(pts))
    slope, intercept, resid = do_fit(all_ix)
    excluded = ()
    if drop_leveraged_endpoint and len(pts) > 3:
        top = int(np.argmax(lx))
        mean_abs = float(np.mean(np.abs(resid)))
        if mean_abs > 0 and abs(resid[top]) > 2.0 * mean_abs:
            keep = all_ix[all_ix != top]
            slope, intercept, resid = do_fit(keep)
            excluded = (pts[top][0],)
    return SlopeFit(float(slope), float(intercept), float(np.linalg.norm(resid)), excluded)


def two_segment_slopes(xs, ys):
    """Fit a continuous-in-spirit two-segment log-log slope model.

    Scans interior breakpoints, fitting independent slopes on each side,
    and returns (slope_lo, slope_hi, x_break, sse) minimizing the summed
    squared residual.  Used to locate damping-regime transitions; each
    segment needs at least two points.
    """
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if xs.size < 4:
        raise AnalysisError("need at least four points for a break fit")
    order = np.argsort(xs)
    lx, ly = np.log(xs[order]), np.log(ys[order])
    best = None
    for k in range(2, lx.size - 1):
        s1, b1 = np.polyfit(lx[:k], ly[:k], 1)
        s2, b2 = np.polyfit(lx[k:], ly[k:], 1)
        sse = float(np.sum((ly[:k] - s1 * lx[:k] - b1) ** 2)
                    + np.sum((ly[k:] - s2 * lx[k:] - b2) ** 2))
        if best is None or sse < best[3]:
            # break placed where the two fitted lines intersect
            if abs(s2 - s1) > 1e-12:
                x_break = math.exp((b1 - b2) / (s2 - s1))
            else:
                x_break = math.exp(0.5 * (lx[k - 1] + lx[k]))
            best = (float(s1), float(s2), float(x_break), sse)
    return best
