import numpy as np
import pytest

from vpcalib.masks import (
    DISCONTINUOUS,
    ERF,
    TANH,
    MaskError,
    MaskProfile,
    MaskSpec,
    build_mask_field,
    compactify,
    eval_mask,
    eval_normalized,
    mask_from_fields,
    mask_to_fields,
    parse_mask,
    saturation_halfwidth,
)

SMOOTH = [TANH, ERF, MaskProfile("compact_tanh", 1.0), MaskProfile("compact_erf", 1.0)]


def fd_slope(profile, x, h=1e-6):
    return (eval_normalized(profile, x + h) - eval_normalized(profile, x - h)) / (2 * h)


def test_midpoint_is_half():
    for profile in SMOOTH:
        assert eval_normalized(profile, 0.0) == pytest.approx(0.5, abs=1e-14)


@pytest.mark.parametrize("profile", SMOOTH, ids=lambda p: p.label())
def test_unit_slope_at_origin(profile):
    assert fd_slope(profile, 0.0) == pytest.approx(-1.0, abs=1e-8)


def test_erf_symmetry_example():
    assert eval_normalized(ERF, 1.5) + eval_normalized(ERF, -1.5) == pytest.approx(1.0, abs=1e-14)


@pytest.mark.parametrize("profile", SMOOTH, ids=lambda p: p.label())
def test_bounded_symmetric_monotone(profile):
    x = np.linspace(-10.0, 10.0, 2001)
    vals = eval_normalized(profile, x)
    assert np.all(vals >= 0.0) and np.all(vals <= 1.0)
    np.testing.assert_allclose(vals + vals[::-1], 1.0, atol=1e-12)
    assert np.all(np.diff(vals) <= 0.0)
    # strict decrease inside the transition region; near saturation the
    # values underflow to exactly 0/1, so strictness is only testable
    # where the profile sits above the double-precision floor
    if profile.is_compact:
        inside = (x > -0.85 * profile.c) & (x < 0.85 * profile.c)
    else:
        inside = (x > -2.5) & (x < 2.5)
    assert np.all(np.diff(vals[inside]) < 0.0)


def test_compactify_exact_outside():
    prof = compactify(TANH, 1.0)
    assert eval_normalized(prof, -1.0) == 1.0
    assert eval_normalized(prof, 1.0) == 0.0
    assert eval_normalized(prof, -3.7) == 1.0
    assert eval_normalized(prof, 52.0) == 0.0
    assert eval_normalized(prof, 0.0) == pytest.approx(0.5, abs=1e-15)
    # continuity at the edges
    assert eval_normalized(prof, 1.0 - 1e-9) < 1e-12
    assert eval_normalized(prof, -1.0 + 1e-9) > 1.0 - 1e-12


def test_compactified_erf_near_edge():
    prof = MaskProfile("compact_erf", 1.0)
    assert eval_normalized(prof, 0.999999) < 1e-12


def test_compactify_slope_unchanged():
    prof = compactify(TANH, 1.0)
    assert fd_slope(prof, 0.0, h=1e-7) == pytest.approx(-1.0, abs=1e-8)


def test_compactify_rejects_bad_inputs():
    with pytest.raises(MaskError):
        compactify(TANH, 0.0)
    with pytest.raises(MaskError):
        compactify(DISCONTINUOUS, 1.0)
    with pytest.raises(MaskError):
        compactify(MaskProfile("compact_erf", 1.0), 1.0)


def test_discontinuous_step_and_boundary_point():
    spec = MaskSpec(DISCONTINUOUS, 0.0, 0.0)
    assert eval_mask(spec, -0.1) == 1.0
    assert eval_mask(spec, 0.1) == 0.0
    assert eval_mask(spec, 0.0) == 0.0  # boundary point belongs to the fluid


def test_shift_moves_midpoint():
    spec = MaskSpec(TANH, 2.0, 1.0)
    assert eval_mask(spec, 2.0) == pytest.approx(0.5, abs=1e-14)


def test_scaling_definition():
    spec = MaskSpec(ERF, 0.0, 2.0)
    assert eval_mask(spec, 1.0) == eval_normalized(ERF, 0.5)


def test_translation_equivariance_exact():
    # dyadic samples make the argument arithmetic exact in floating point
    xs = [-2.75, -0.5, 0.25, 1.5]
    for a in (0.5, 1.0, 2.0):
        for x in xs:
            base = eval_mask(MaskSpec(TANH, 0.5, 0.25), x)
            shifted = eval_mask(MaskSpec(TANH, 0.5 + a, 0.25), x + a)
            assert base == shifted  # bitwise


def test_scale_equivariance_exact():
    # power-of-two ratios keep (x/delta) bitwise identical
    l, d1 = 0.5, 0.25
    for k in (2.0, 4.0):
        for x in (-1.5, 0.25, 3.0):
            lhs = eval_mask(MaskSpec(ERF, l, k * d1), l + k * x)
            rhs = eval_mask(MaskSpec(ERF, l, d1), l + x)
            assert lhs == rhs


def test_delta_zero_is_step_for_smooth_families():
    spec = MaskSpec(TANH, 1.0, 0.0)
    assert eval_mask(spec, 0.999999) == 1.0
    assert eval_mask(spec, 1.0) == 0.0


def test_spec_validation():
    with pytest.raises(MaskError):
        MaskSpec(TANH, 0.0, -0.1)
    with pytest.raises(MaskError):
        MaskSpec(DISCONTINUOUS, 0.0, 0.5)
    with pytest.raises(MaskError):
        MaskProfile("compact_tanh")  # missing half-width
    with pytest.raises(MaskError):
        MaskProfile("gaussian")


def test_build_mask_field_circle():
    # unit circle: sdf = r - 1, positive outside (fluid)
    x = np.linspace(-2.0, 2.0, 81)
    xx, yy = np.meshgrid(x, x)
    r = np.hypot(xx, yy)
    sdf = r - 1.0
    sharp = build_mask_field(sdf, MaskSpec(DISCONTINUOUS, 0.0, 0.0))
    np.testing.assert_array_equal(sharp, (r < 1.0).astype(float))

    smooth = MaskSpec(ERF, 0.0, 0.01)
    field = build_mask_field(sdf, smooth)
    assert np.all((field >= 0.0) & (field <= 1.0))
    assert eval_mask(smooth, 0.0) == pytest.approx(0.5, abs=1e-14)
    # monotone nonincreasing along any radial ray
    ray = np.linspace(0.0, 2.0, 400)
    gamma_ray = build_mask_field(ray - 1.0, smooth)
    assert np.all(np.diff(gamma_ray) <= 0.0)


def test_saturation_halfwidth():
    c_tanh = saturation_halfwidth(TANH)
    assert eval_normalized(TANH, c_tanh) < 1e-16
    assert eval_normalized(TANH, 0.99 * c_tanh) >= 1e-16
    assert saturation_halfwidth(MaskProfile("compact_erf", 1.0)) == 1.0


def test_mask_rule_parsing():
    rule = parse_mask("discontinuous,1*eps,0")
    spec = rule.spec(0.01)
    assert spec.shift == pytest.approx(0.01)
    assert spec.delta == 0.0
    rule2 = parse_mask("compact_erf,0,3.8*eps,1")
    spec2 = rule2.spec(0.1)
    assert spec2.profile.c == 1.0
    assert spec2.delta == pytest.approx(0.38)
    with pytest.raises(MaskError):
        parse_mask("erf,0")
    with pytest.raises(MaskError):
        parse_mask("erf,1*eps,0").spec()  # epsilon required


def test_mask_field_serialization_roundtrip():
    spec = MaskSpec(MaskProfile("compact_tanh", 1.0), 0.125, 0.0625)
    fields = mask_to_fields(spec)
    assert all(isinstance(v, str) for v in fields.values())
    back = mask_from_fields(fields)
    assert back == spec
