import numpy as np
import pytest

from shbrdf import brdf, sh


def test_filter_endpoints_and_monotonicity():
    kern = brdf.filter_kernel(0.3, 8)
    assert kern[0] == 1.0
    assert np.all(np.diff(kern) < 0)
    np.testing.assert_allclose(brdf.filter_kernel(0.0, 8), np.ones(9))


def test_smith_g1_bounds():
    theta = np.linspace(0, np.pi / 2, 50, endpoint=False)
    g = brdf.smith_g1(0.5, theta)
    assert np.all(g > 0) and np.all(g <= 1.0)
    assert g[0] == pytest.approx(1.0)
    assert brdf.smith_g1(0.5, np.pi / 2) == 0.0
    # rougher surfaces occlude more at oblique angles
    assert np.all(brdf.smith_g1(0.9, theta[1:]) < brdf.smith_g1(0.1, theta[1:]))


def test_smith_g1_derivative_matches_fd():
    theta = np.linspace(0.1, 1.4, 20)
    alpha, h = 0.4, 1e-6
    fd = (brdf.smith_g1(alpha + h, theta) -
          brdf.smith_g1(alpha - h, theta)) / (2 * h)
    np.testing.assert_allclose(brdf.smith_g1_dalpha(alpha, theta), fd,
                               atol=1e-6)


def test_fresnel_endpoints():
    r0 = np.array([0.04, 0.5, 1.0])
    at_normal = brdf.fresnel_schlick(r0, 0.0)
    np.testing.assert_allclose(at_normal[0], r0)
    grazing = brdf.fresnel_schlick(r0, np.pi / 2)
    np.testing.assert_allclose(grazing[0], 1.0, atol=1e-12)


def test_principled_mapping():
    p = brdf.PrincipledParams(np.array([0.8, 0.4, 0.2]), 0.0, 0.5)
    params, r0 = brdf.principled_to_ts(p)
    assert params.k_s == 1.0
    assert params.alpha == pytest.approx(0.25)
    np.testing.assert_allclose(r0, brdf.R0_DIELECTRIC)
    np.testing.assert_allclose(params.k_d, p.base_color)
    # full metallic moves base color into the reflectance
    pm = brdf.PrincipledParams(np.array([0.8, 0.4, 0.2]), 1.0, 0.5)
    _, r0m = brdf.principled_to_ts(pm)
    np.testing.assert_allclose(r0m, pm.base_color)
    _, r0nf = brdf.principled_to_ts(pm, use_fresnel=False)
    params_nf, _ = brdf.principled_to_ts(pm, use_fresnel=False)
    assert params_nf.k_s == pytest.approx(float(np.mean(pm.base_color)))


def test_irradiance_of_unit_hemisphere():
    # integral of cos(theta) over the hemisphere is pi
    theta, phi = sh.fibonacci_hemisphere(4000)
    samples = sh.DirectionalSamples(theta, phi, np.ones(4000))
    np.testing.assert_allclose(brdf.irradiance(samples), np.pi, rtol=2e-3)


def _context(irr, coeffs, max_degree=8):
    light = sh.SHExpansion(max_degree, coeffs)
    return brdf.ShadingContext(np.atleast_1d(irr), light, light, 0.0)


def test_render_diffuse_only():
    ctx = _context(np.pi, np.zeros(81))
    params = brdf.BrdfParams(np.array([0.6]), 0.0, 0.2)
    out = brdf.render_outgoing(ctx, params, [0.3, 1.0], [0.0, 1.0])
    np.testing.assert_allclose(out, 0.6 * np.pi / (2 * np.pi), atol=1e-12)


def test_render_specular_matches_filtered_expansion():
    rng = np.random.default_rng(9)
    coeffs = rng.normal(size=81) * np.exp(-0.5 * sh.degree_of_index(8))
    ctx = _context(0.0, coeffs)
    params = brdf.BrdfParams(np.array([0.0]), 0.7, 0.3)
    theta = np.array([0.4])
    phi = np.array([1.1])
    out = brdf.render_outgoing(ctx, params, theta, phi,
                               masking=False, clamp=False)
    filtered = sh.convolve_isotropic(ctx.light,
                                     0.7 * brdf.filter_kernel(0.3, 8))
    np.testing.assert_allclose(out, filtered.evaluate(theta, phi), atol=1e-12)


def test_render_clamps_negative_ringing():
    ctx = _context(0.0, -np.eye(81)[2] * 10.0)
    params = brdf.BrdfParams(np.array([0.0]), 1.0, 0.05)
    out = brdf.render_outgoing(ctx, params, [0.1], [0.0])
    assert np.all(out >= 0.0)
