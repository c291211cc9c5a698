"""Mask profile families and shifted/smoothed mask evaluation.

A normalized profile decays monotonically from 1 (deep solid) to 0 (deep
fluid), crosses 1/2 at the origin with slope -1, and satisfies the
symmetry g(x) + g(-x) = 1.  Full masks are shifted by ``shift`` and
scaled by ``delta``; ``delta = 0`` is the sharp-interface limit.  Signed
distances are taken positive on the fluid side, so a mask field on a grid
is just the profile evaluated at the signed distance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import erf

SMOOTH_FAMILIES = ("tanh", "erf", "compact_tanh", "compact_erf")
FAMILIES = SMOOTH_FAMILIES + ("discontinuous",)

_SQRT_PI = math.sqrt(math.pi)


class MaskError(ValueError):
    pass


@dataclass(frozen=True)
class MaskProfile:
    """Normalized profile: one of the named families, plus the compact
    half-width c for the compact families."""

    family: str
    c: float | None = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise MaskError(f"unknown mask family {self.family!r}")
        if self.is_compact:
            if self.c is None or self.c <= 0:
                raise MaskError("compact families need half-width c > 0")
        elif self.c is not None:
            raise MaskError(f"family {self.family!r} takes no half-width")

    @property
    def is_compact(self):
        return self.family.startswith("compact_")

    @property
    def is_smooth(self):
        return self.family != "discontinuous"

    def label(self):
        if self.is_compact:
            return f"{self.family}({self.c:g})"
        return self.family


TANH = MaskProfile("tanh")
ERF = MaskProfile("erf")
DISCONTINUOUS = MaskProfile("discontinuous")


def _base_normalized(family, x):
    if family == "tanh":
        return 0.5 * (1.0 - np.tanh(2.0 * x))
    if family == "erf":
        return 0.5 * (1.0 - erf(_SQRT_PI * x))
    raise MaskError(f"no smooth base profile for {family!r}")


def eval_normalized(profile, x):
    """Evaluate the normalized profile at x (scalar or array), in [0, 1]."""
    x = np.asarray(x, dtype=float)
    scalar = x.ndim == 0
    x = np.atleast_1d(x)
    if profile.family == "discontinuous":
        out = np.where(x < 0.0, 1.0, 0.0)
    elif not profile.is_compact:
        out = _base_normalized(profile.family, x)
    else:
        c = profile.c
        base = profile.family.removeprefix("compact_")
        out = np.where(x <= -c, 1.0, 0.0)
        inside = (x > -c) & (x < c)
        xi = x[inside]
        # argument diverges at +-c, making the profile exactly 0/1 outside
        arg = xi / np.sqrt(np.maximum(1.0 - (xi / c) ** 2, np.finfo(float).tiny))
        out[inside] = _base_normalized(base, arg)
    return float(out[0]) if scalar else out


def compactify(profile, c):
    """Restrict a smooth noncompact profile to interpolate on [-c, c]."""
    if c <= 0:
        raise MaskError("compact half-width must be positive")
    if not profile.is_smooth or profile.is_compact:
        raise MaskError("can only compactify a smooth noncompact profile")
    return MaskProfile(f"compact_{profile.family}", c)


@dataclass(frozen=True)
class MaskSpec:
    """A profile together with its shift and smoothing width.

    ``delta = 0`` means the sharp-interface limit regardless of family;
    the discontinuous family requires it.
    """

    profile: MaskProfile
    shift: float = 0.0
    delta: float = 0.0

    def __post_init__(self):
        if self.delta < 0:
            raise MaskError("smoothing width must be nonnegative")
        if self.profile.family == "discontinuous" and self.delta != 0.0:
            raise MaskError("discontinuous profile requires delta = 0")

    def label(self):
        return f"{self.profile.label()},l={self.shift:g},d={self.delta:g}"

    def support_halfwidth(self, cutoff=1e-16):
        """Half-width around the shift beyond which the mask is saturated."""
        if self.delta == 0.0:
            return 0.0
        return saturation_halfwidth(self.profile, cutoff) * self.delta


def eval_mask(spec, x):
    """Evaluate the shifted/scaled mask at x.

    For delta > 0 this is the normalized profile at (x - shift) / delta;
    for delta = 0 it is the unit step, with the boundary point x = shift
    assigned to the fluid side (value 0).
    """
    x = np.asarray(x, dtype=float)
    scalar = x.ndim == 0
    if spec.delta == 0.0:
        out = np.where(x < spec.shift, 1.0, 0.0)
        return float(out) if scalar else out
    return eval_normalized(spec.profile, (x - spec.shift) / spec.delta)


def build_mask_field(sdf, spec):
    """Mask values on a grid from its signed distance field.

    The signed distance is positive in the fluid and negative in the
    solid, so the mask decays into the fluid.
    """
    return eval_mask(spec, np.asarray(sdf, dtype=float))


def saturation_halfwidth(profile, cutoff=1e-16):
    """Smallest half-width beyond which the profile is within ``cutoff`` of
    its limits 0 and 1; by symmetry one tail suffices.  Compact profiles
    saturate exactly at c."""
    key = (profile, cutoff)
    if key in _SATURATION_CACHE:
        return _SATURATION_CACHE[key]
    if profile.is_compact:
        return profile.c
    if not profile.is_smooth:
        return 0.0
    lo, hi = 0.5, 1.0
    while eval_normalized(profile, hi) >= cutoff:
        lo, hi = hi, 2.0 * hi
        if hi > 1e4:
            raise MaskError("profile does not saturate")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if eval_normalized(profile, mid) < cutoff:
            hi = mid
        else:
            lo = mid
        if hi - lo < 1e-12 * hi:
            break
    _SATURATION_CACHE[key] = hi
    return hi


_SATURATION_CACHE = {}


# ----------------------------------------------------------------------
# CLI / config serialization (decimal strings)
# ----------------------------------------------------------------------

def parse_mask(text):
    """Parse "family,shift,delta[,c]"; shift and delta are decimal strings.

    A trailing "*eps" on shift or delta marks a per-epsilon proportionality
    and is resolved by ``scale_mask``; until then the spec stores the bare
    coefficient and remembers which fields scale.
    """
    parts = [p.strip() for p in str(text).split(",")]
    if len(parts) not in (3, 4):
        raise MaskError(f"mask spec needs 3 or 4 fields, got {text!r}")
    family = parts[0]
    c = float(parts[3]) if len(parts) == 4 else None
    shift, shift_scales = _parse_scaled(parts[1])
    delta, delta_scales = _parse_scaled(parts[2])
    profile = MaskProfile(family, c)
    rule = MaskRule(profile, shift, delta, shift_scales, delta_scales, label=str(text))
    return rule


def _parse_scaled(token):
    token = token.strip()
    if token.endswith("*eps"):
        return float(token[: -len("*eps")]), True
    return float(token), False


@dataclass(frozen=True)
class MaskRule:
    """A mask family whose shift/smoothing may be proportional to epsilon."""

    profile: MaskProfile
    shift: float
    delta: float
    shift_scales: bool = False
    delta_scales: bool = False
    label: str = ""

    def spec(self, eps=None):
        shift, delta = self.shift, self.delta
        if self.shift_scales or self.delta_scales:
            if eps is None:
                raise MaskError(f"mask {self.label!r} needs an epsilon to resolve")
            if self.shift_scales:
                shift = shift * eps
            if self.delta_scales:
                delta = delta * eps
        return MaskSpec(self.profile, shift, delta)

    def name(self):
        return self.label or self.spec(1.0).label()


def mask_to_fields(spec):
    """Serialize a MaskSpec to decimal-string fields for config files."""
    fields = {
        "profile": spec.profile.family,
        "shift": repr(spec.shift),
        "delta": repr(spec.delta),
    }
    if spec.profile.is_compact:
        fields["c"] = repr(spec.profile.c)
    return fields


def mask_from_fields(fields):
    c = float(fields["c"]) if "c" in fields and fields["c"] != "" else None
    profile = MaskProfile(fields["profile"], c)
    return MaskSpec(profile, float(fields["shift"]), float(fields["delta"]))
