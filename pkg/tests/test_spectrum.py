import numpy as np
import pytest

from shbrdf import brdf, sh, spectrum


def make_pair(k_s=0.6, alpha=0.25, k_d=0.5, e=1.0, max_degree=8, seed=0,
              noise=0.0):
    ells = np.arange(max_degree + 1, dtype=np.float64)
    s_l = np.exp(-0.3 * ells)
    s_b = k_s ** 2 * np.exp(-2 * (alpha * ells) ** 2) * s_l
    if noise:
        rng = np.random.default_rng(seed)
        s_b = np.clip(s_b + noise * rng.normal(size=s_b.shape), 0, None)
    l00 = np.sqrt(s_l[0])
    b00 = k_d * e / np.sqrt(np.pi) + k_s * l00
    return spectrum.SpectrumPair(s_l=s_l, s_b=s_b, b00=[b00] * 3,
                                 l00=[l00] * 3, irradiance=[e] * 3)


def test_entropy_uniform_and_onehot_exact():
    assert spectrum.entropy(np.full(100, 0.01)) == 1.0
    one_hot = np.zeros(100)
    one_hot[7] = 1.0
    assert spectrum.entropy(one_hot) == 0.0


def test_parameter_grid_cell_centers():
    ks, alphas = spectrum.parameter_grid(10, 10)
    np.testing.assert_allclose(ks, np.arange(0.05, 1.0, 0.1))
    np.testing.assert_allclose(alphas, np.arange(0.05, 1.0, 0.1) ** 2)


def test_objective_zero_at_generator():
    pair = make_pair(k_s=0.6, alpha=0.25)
    assert spectrum.objective(pair, 0.6, 0.25) == pytest.approx(0.0, abs=1e-20)
    assert spectrum.objective(pair, 0.7, 0.25) > 1e-4


def test_grid_search_recovers_generator():
    ks, alphas = spectrum.parameter_grid(10, 10)
    pair = make_pair(k_s=ks[5], alpha=alphas[4])
    got_ks, got_alpha = spectrum.grid_search(pair).argmax()
    assert got_ks == pytest.approx(ks[5])
    assert got_alpha == pytest.approx(alphas[4])


def test_recover_diffuse_round_trip():
    pair = make_pair(k_s=0.6, k_d=0.5, e=2.0)
    np.testing.assert_allclose(spectrum.recover_diffuse(pair, 0.6), 0.5,
                               atol=1e-12)


def test_identify_filter_alpha_exact():
    ells = np.arange(9.0)
    _, alphas = spectrum.parameter_grid(1, 100)
    target = alphas[44]
    s_l = np.exp(-0.2 * ells)
    s_b = np.exp(-2 * (target * ells) ** 2) * s_l
    alpha, cell = spectrum.identify_filter_alpha(s_b, s_l)
    assert cell == 44
    assert alpha == pytest.approx(target)


def test_luminance_weights():
    np.testing.assert_allclose(spectrum.luminance(np.ones((4, 3))), 1.0)
    vals = np.array([[1.0, 0.0, 0.0]])
    assert spectrum.luminance(vals)[0] == pytest.approx(0.2126)


def test_merge_by_entropy_picks_most_confident():
    a = brdf.BrdfParams(np.array([0.1]), 0.1, 0.1)
    b = brdf.BrdfParams(np.array([0.9]), 0.9, 0.9)
    chosen = spectrum.merge_by_entropy([(a, 0.8), (b, 0.2)])
    assert chosen is b


def test_entropy_increases_with_sigma():
    pair = make_pair(noise=1e-3)
    h_tight = spectrum.grid_search(pair, sigma=1e-2).entropy
    h_loose = spectrum.grid_search(pair, sigma=1e-1).entropy
    assert h_tight < h_loose
