import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import special

from nlheat import kernels as kn

# C_{d,alpha} = alpha 2^(alpha-1) Gamma((d+alpha)/2) / (pi^(d/2) Gamma(1-alpha/2)), mpmath, 18 digits
C_ORACLE = {
    (1, 0.5): 0.199471140200716353, (1, 1.0): 0.318309886183790672,
    (1, 1.5): 0.299206710301074545, (2, 0.5): 0.0832419838754250712,
    (2, 1.0): 0.159154943091895336, (2, 1.5): 0.171167129690552364,
    (3, 0.5): 0.0476202269506807306, (3, 1.0): 0.101321183642337771,
    (3, 1.5): 0.119050567376701833,
}


@pytest.mark.parametrize("d,alpha", sorted(C_ORACLE))
def test_fractional_constant_matches_closed_form(d, alpha):
    assert kn.fractional_constant(d, alpha) == pytest.approx(C_ORACLE[d, alpha], rel=1e-9)


def test_cauchy_constant_is_one_over_pi():
    assert kn.fractional_constant(1, 1.0) == pytest.approx(1 / np.pi, rel=1e-14)


@pytest.mark.parametrize("text", ["fractional:alpha=2.5", "fractional:alpha=0",
                                  "log_damped:alpha=0.5", "cosine_modulated:alpha=2",
                                  "nosuch:alpha=1", "fractional:alpha", "fractional:beta=1"])
def test_parse_spec_rejects_bad_input(text):
    with pytest.raises(ValueError):
        kn.parse_spec(text)


def test_parse_spec_and_json_round_trip():
    spec = kn.parse_spec("sum_fractional:alpha1=0.6,alpha2=0.9", 2)
    assert spec.d == 2 and spec.label == "sum_fractional:alpha1=0.6,alpha2=0.9"
    again = kn.from_json(kn.to_json(spec))
    assert again == spec and hash(again) == hash(spec)
    with pytest.raises(ValueError):
        kn.from_json({"d": 1})


def test_eval_kernel_rejects_origin_and_bad_shape():
    with pytest.raises(ValueError):
        kn.eval_kernel(kn.fractional(1.0), 0.0)
    with pytest.raises(ValueError):
        kn.eval_kernel(kn.fractional(1.0, 2), np.ones(3))


def test_fractional_kernel_values():
    x = np.array([0.5, 1.0, 3.0])
    np.testing.assert_allclose(kn.eval_kernel(kn.fractional(1.0), x), 1 / (np.pi * x ** 2),
                               rtol=1e-14)
    pts = np.array([[3.0, 4.0]])
    v = kn.eval_kernel(kn.fractional(1.5, 2), pts)
    np.testing.assert_allclose(v, C_ORACLE[2, 1.5] * 5.0 ** -3.5, rtol=1e-9)


@pytest.mark.parametrize("spec", kn.catalog(1), ids=lambda s: s.label)
def test_catalog_is_levy_integrable_and_scales(spec):
    r = kn.check_levy_integrability(spec)
    assert r.finite and np.isfinite(r.value) and r.value > 0
    s = kn.check_scaling(spec)
    assert s.passed and 0 < s.lambda1 and s.lambda2 < np.inf
    lo, hi = kn.check_envelope(spec, n=512)
    assert 0 < lo <= hi < np.inf


def test_borderline_alpha_two_kernel_is_not_integrable():
    scale = kn.ScaleFunction(lambda r: r ** 2, 2.0, 2.0)
    spec = kn.custom(lambda r: r ** -3.0, scale, d=1, name="alpha2")
    assert not kn.check_levy_integrability(spec).finite


def test_scale_function_rejects_bad_exponents():
    with pytest.raises(ValueError):
        kn.ScaleFunction(lambda r: r, 1.5, 1.0)
    with pytest.raises(ValueError):
        kn.ScaleFunction(lambda r: r, 0.5, 2.5)


def test_scaling_flags_nonmonotone_scale():
    sc = kn.ScaleFunction(lambda r: r * (1.1 + np.sin(np.log(r))), 0.1, 2.0)
    assert not kn.check_scaling(sc).passed


@given(st.floats(0.05, 1.95), st.floats(0.1, 50.0))
def test_fractional_kernel_is_even_and_homogeneous(alpha, x):
    spec = kn.fractional(alpha)
    k = kn.eval_kernel(spec, np.array([x, -x, 2 * x]))
    assert k[0] == pytest.approx(k[1], rel=1e-14)
    assert k[2] == pytest.approx(k[0] * 2.0 ** (-1 - alpha), rel=1e-12)


@given(st.floats(0.0, 30.0))
def test_angular_mean_d1_d3(z):
    assert kn.angular_cos_mean(z, 1) == pytest.approx(np.cos(z), abs=1e-13)
    assert kn.angular_cos_mean(z, 3) == pytest.approx(np.sinc(z / np.pi), abs=1e-12)


@given(st.floats(0.0, 30.0))
def test_angular_mean_d2_against_angle_average(z):
    th = np.linspace(0, 2 * np.pi, 4001)[:-1]
    avg = np.mean(np.cos(z * np.cos(th)))
    assert kn.angular_cos_mean(z, 2) == pytest.approx(avg, abs=1e-12)


@given(st.floats(1e-8, 1e-2), st.sampled_from([1, 2, 3]))
def test_one_minus_mean_no_cancellation(z, d):
    # leading term of 1 - E cos(z <e,w>) is z^2 / (2d)
    v = float(kn.one_minus_angular_mean(z, d))
    assert v == pytest.approx(z * z / (2 * d), rel=1e-3)


def test_sphere_area():
    assert kn.sphere_area(1) == 2
    assert kn.sphere_area(2) == pytest.approx(2 * np.pi)
    assert kn.sphere_area(3) == pytest.approx(4 * np.pi)
    assert kn.sphere_area(4) == pytest.approx(2 * np.pi ** 2 / special.gamma(2))


def test_sum_fractional_small_exponents_integrable():
    # each fractional part gives 2 C (1/(2 - a) + 1/a) for d = 1
    spec = kn.sum_fractional(0.3, 0.7)
    expect = sum(2 * kn.fractional_constant(1, a) * (1 / (2 - a) + 1 / a) for a in (0.3, 0.7))
    r = kn.check_levy_integrability(spec)
    assert r.finite and r.value == pytest.approx(expect, rel=1e-6)
    s = kn.check_scaling(spec)
    assert s.passed and spec.scale.beta1 == 0.3 and spec.scale.beta2 == 0.7
