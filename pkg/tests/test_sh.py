import numpy as np
import pytest

from shbrdf import sh
from shbrdf.errors import InsufficientSamples, SingularSystem


def random_expansion(max_degree, channels=1, seed=0, decay=0.0):
    rng = np.random.default_rng(seed)
    coeffs = rng.normal(size=(sh.num_coeffs(max_degree), channels))
    if decay:
        coeffs *= np.exp(-decay * sh.degree_of_index(max_degree))[:, None]
    return sh.SHExpansion(max_degree, coeffs)


def test_index_layout():
    assert sh.sh_index(0, 0) == 0
    assert sh.sh_index(1, -1) == 1
    assert sh.sh_index(1, 0) == 2
    assert sh.sh_index(1, 1) == 3
    assert sh.num_coeffs(8) == 81
    degs = sh.degree_of_index(2)
    assert degs.tolist() == [0, 1, 1, 1, 2, 2, 2, 2, 2]


def test_low_order_closed_forms():
    rng = np.random.default_rng(3)
    theta = rng.uniform(0, np.pi, 50)
    phi = rng.uniform(0, 2 * np.pi, 50)
    basis = sh.eval_sh_basis(theta, phi, 1)
    x, y, z = sh.sph_to_unit(theta, phi).T
    # degree 1 carries the Condon-Shortley phase (P_1^1 = -sin theta)
    c = np.sqrt(3.0 / (4.0 * np.pi))
    np.testing.assert_allclose(basis[:, 0], 0.5 / np.sqrt(np.pi))
    np.testing.assert_allclose(basis[:, sh.sh_index(1, -1)], -c * y,
                               atol=1e-12)
    np.testing.assert_allclose(basis[:, sh.sh_index(1, 0)], c * z, atol=1e-12)
    np.testing.assert_allclose(basis[:, sh.sh_index(1, 1)], -c * x,
                               atol=1e-12)


def test_orthonormality_quadrature():
    theta, phi = sh.fibonacci_sphere(20000)
    basis = sh.eval_sh_basis(theta, phi, 8)
    gram = basis.T @ basis * (4.0 * np.pi / len(theta))
    assert np.max(np.abs(gram - np.eye(81))) < 1e-3


def test_dense_round_trip_exact():
    truth = random_expansion(8, channels=3, seed=1)
    theta, phi = sh.fibonacci_sphere(500)
    samples = sh.DirectionalSamples(theta, phi, truth.evaluate(theta, phi))
    fit = sh.fit_dense(samples, 8)
    np.testing.assert_allclose(fit.coeffs, truth.coeffs, atol=1e-9)


def test_dense_fit_needs_enough_samples():
    theta, phi = sh.fibonacci_sphere(10)
    samples = sh.DirectionalSamples(theta, phi, np.ones(10))
    with pytest.raises(InsufficientSamples):
        sh.fit_dense(samples, 8)


def test_rank_deficient_unregularized_raises():
    theta, phi = sh.fibonacci_hemisphere(20)
    samples = sh.DirectionalSamples(theta, phi, np.ones(20))
    with pytest.raises(SingularSystem):
        sh.fit_sparse_regularized(samples, 8, lam=0.0)


def test_power_spectrum_rotation_invariant():
    truth = random_expansion(6, seed=2)
    rng = np.random.default_rng(5)
    rot = np.linalg.qr(rng.normal(size=(3, 3)))[0]
    if np.linalg.det(rot) < 0:
        rot[:, 0] = -rot[:, 0]
    theta, phi = sh.fibonacci_sphere(400)
    rotated_dirs = sh.sph_to_unit(theta, phi) @ rot.T
    rt, rp = sh.unit_to_sph(rotated_dirs)
    samples = sh.DirectionalSamples(theta, phi, truth.evaluate(rt, rp))
    fit = sh.fit_dense(samples, 6)
    np.testing.assert_allclose(sh.power_spectrum(fit),
                               sh.power_spectrum(truth), atol=1e-8)


def test_regularizer_shrinks_high_degrees():
    truth = random_expansion(8, seed=4)
    theta, phi = sh.fibonacci_hemisphere(100)
    samples = sh.DirectionalSamples(theta, phi, truth.evaluate(theta, phi))
    fit = sh.fit_sparse_regularized(samples, 8, lam=1.0)
    degs = sh.degree_of_index(8)
    high = np.abs(fit.coeffs[degs >= 6]).mean()
    high_true = np.abs(truth.coeffs[degs >= 6]).mean()
    assert high < 0.5 * high_true


def test_convolution_matches_brute_force():
    # oracle: angular-domain convolution with the matching zonal kernel,
    # evaluated by dense quadrature, equals per-degree multiplication
    truth = random_expansion(4, seed=6)
    kernel = np.exp(-0.3 * np.arange(5.0))
    conv = sh.convolve_isotropic(truth, kernel)
    qt, qp = sh.fibonacci_sphere(20000)
    qdirs = sh.sph_to_unit(qt, qp)
    fvals = truth.evaluate(qt, qp)[:, 0]
    et, ep = sh.fibonacci_sphere(40)
    edirs = sh.sph_to_unit(et, ep)
    spatial = sh.zonal_kernel_spatial(kernel, 4, edirs @ qdirs.T)
    brute = spatial @ fvals * (4.0 * np.pi / len(qt))
    np.testing.assert_allclose(brute, conv.evaluate(et, ep)[:, 0], atol=1e-4)


def test_fibonacci_hemisphere_upper():
    theta, _ = sh.fibonacci_hemisphere(128)
    assert np.all(theta < np.pi / 2)
    assert len(theta) == 128


def test_solve_operator_shared_across_channels():
    theta, phi = sh.fibonacci_hemisphere(60)
    basis = sh.eval_sh_basis(theta, phi, 4)
    op = sh.solve_operator(basis, np.ones(60), 1e-4, 4)
    values = np.random.default_rng(7).normal(size=(60, 3))
    samples = sh.DirectionalSamples(theta, phi, values)
    fit = sh.fit_sparse_regularized(samples, 4, lam=1e-4)
    np.testing.assert_allclose(op @ values, fit.coeffs, atol=1e-12)
