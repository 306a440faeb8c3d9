"""Real spherical harmonics: basis evaluation, transforms, power spectra.

Conventions: colatitude theta in [0, pi] measured from +z, longitude phi in
[0, 2*pi) measured from +x. The basis is the real, orthonormal one with the
Kronecker-delta normalization factor and a cos/sin split on the sign of the
order m. Coefficients are stored flat with index l*(l+1) + m.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import eval_legendre, gammaln, lpmv

from .errors import InsufficientSamples, SingularSystem

GOLDEN_ANGLE = np.pi * (3.0 - np.sqrt(5.0))

DEFAULT_MAX_DEGREE = 8
DEFAULT_LAMBDA = 1e-4


def sh_index(degree: int, order: int) -> int:
    """Flat coefficient index for (l, m)."""
    return degree * (degree + 1) + order


def num_coeffs(max_degree: int) -> int:
    return (max_degree + 1) ** 2


def degree_of_index(max_degree: int) -> np.ndarray:
    """Degree l for each flat coefficient index up to max_degree."""
    ells = np.arange(max_degree + 1)
    return np.repeat(ells, 2 * ells + 1)


def sph_to_unit(theta, phi) -> np.ndarray:
    """(theta, phi) -> unit vectors, shape (n, 3)."""
    theta = np.asarray(theta, dtype=np.float64)
    phi = np.asarray(phi, dtype=np.float64)
    st = np.sin(theta)
    return np.stack([st * np.cos(phi), st * np.sin(phi), np.cos(theta)], axis=-1)


def unit_to_sph(v) -> tuple[np.ndarray, np.ndarray]:
    """Unit vectors -> (theta, phi) with phi wrapped into [0, 2*pi)."""
    v = np.asarray(v, dtype=np.float64)
    theta = np.arccos(np.clip(v[..., 2], -1.0, 1.0))
    phi = np.mod(np.arctan2(v[..., 1], v[..., 0]), 2.0 * np.pi)
    return theta, phi


@dataclass
class DirectionalSamples:
    """Unit directions with per-channel radiance and confidence weights.

    Directions live in a surface-local frame (normal = +z). Values are
    linear HDR radiance, shape (n, channels). Weights are in [0, 1].
    """

    theta: np.ndarray
    phi: np.ndarray
    values: np.ndarray
    weights: np.ndarray = field(default=None)

    def __post_init__(self):
        self.theta = np.atleast_1d(np.asarray(self.theta, dtype=np.float64))
        self.phi = np.mod(np.atleast_1d(np.asarray(self.phi, dtype=np.float64)),
                          2.0 * np.pi)
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim == 1:
            self.values = self.values[:, None]
        if self.weights is None:
            self.weights = np.ones(len(self.theta))
        self.weights = np.atleast_1d(np.asarray(self.weights, dtype=np.float64))
        n = len(self.theta)
        if not (len(self.phi) == n and len(self.values) == n
                and len(self.weights) == n):
            raise ValueError("directions, values and weights must have equal length")
        if np.any(self.weights < 0.0) or np.any(self.weights > 1.0):
            raise ValueError("weights must lie in [0, 1]")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("radiance values must be finite")

    def __len__(self) -> int:
        return len(self.theta)

    @property
    def channels(self) -> int:
        return self.values.shape[1]


@dataclass
class SHExpansion:
    """Coefficient vectors up to max_degree, shape ((l*+1)^2, channels)."""

    max_degree: int
    coeffs: np.ndarray

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=np.float64)
        if self.coeffs.ndim == 1:
            self.coeffs = self.coeffs[:, None]
        if self.coeffs.shape[0] != num_coeffs(self.max_degree):
            raise ValueError(
                f"expected {num_coeffs(self.max_degree)} coefficients, "
                f"got {self.coeffs.shape[0]}")

    @property
    def channels(self) -> int:
        return self.coeffs.shape[1]

    def evaluate(self, theta, phi) -> np.ndarray:
        """Reconstruct the function at directions; shape (n, channels)."""
        basis = eval_sh_basis(theta, phi, self.max_degree)
        return basis @ self.coeffs


def eval_sh_basis(theta, phi, max_degree: int) -> np.ndarray:
    """Evaluate all real SH basis functions; shape (n, (l*+1)^2).

    Column l*(l+1)+m holds Y_lm. Uses the associated Legendre function with
    the Condon-Shortley phase as computed by scipy.
    """
    if max_degree < 0:
        raise ValueError("max_degree must be non-negative")
    theta = np.atleast_1d(np.asarray(theta, dtype=np.float64))
    phi = np.atleast_1d(np.asarray(phi, dtype=np.float64))
    x = np.cos(theta)
    out = np.empty((len(theta), num_coeffs(max_degree)))
    for ell in range(max_degree + 1):
        for m in range(ell + 1):
            # log-space factorial ratio keeps high degrees stable
            norm = np.sqrt(
                (2.0 - (m == 0)) * (2 * ell + 1) / (4.0 * np.pi)
                * np.exp(gammaln(ell - m + 1) - gammaln(ell + m + 1)))
            p = norm * lpmv(m, ell, x)
            if m == 0:
                out[:, sh_index(ell, 0)] = p
            else:
                out[:, sh_index(ell, m)] = p * np.cos(m * phi)
                out[:, sh_index(ell, -m)] = p * np.sin(m * phi)
    return out


def fibonacci_sphere(n: int) -> tuple[np.ndarray, np.ndarray]:
    """n near-uniform points on the sphere via the golden-angle spiral."""
    if n < 1:
        raise ValueError("n must be >= 1")
    i = np.arange(n)
    z = 1.0 - (2.0 * i + 1.0) / n
    theta = np.arccos(np.clip(z, -1.0, 1.0))
    phi = np.mod(i * GOLDEN_ANGLE, 2.0 * np.pi)
    return theta, phi


def fibonacci_hemisphere(n: int) -> tuple[np.ndarray, np.ndarray]:
    """n near-uniform points on the upper hemisphere (z > 0)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    i = np.arange(n)
    z = 1.0 - (2.0 * i + 1.0) / (2.0 * n)
    theta = np.arccos(np.clip(z, -1.0, 1.0))
    phi = np.mod(i * GOLDEN_ANGLE, 2.0 * np.pi)
    return theta, phi


def regularizer_weights(max_degree: int) -> np.ndarray:
    """Per-coefficient penalty weights e^l, repeated over orders m."""
    return np.exp(degree_of_index(max_degree).astype(np.float64))


def solve_operator(basis: np.ndarray, weights: np.ndarray, lam: float,
                   max_degree: int, constant_reg: bool = False) -> np.ndarray:
    """Linear operator M with c = M @ f solving the (regularized) fit.

    Solves (Y^T Ws Y + lambda W) c = Y^T Ws f with Ws = diag(weights) and
    W = diag(e^l) (or identity when constant_reg). Returned M has shape
    ((l*+1)^2, n) and can be reused across channels and texels that share
    the same sample directions and weights.
    """
    if lam < 0:
        raise ValueError("lambda must be >= 0")
    ytw = basis.T * weights
    normal = ytw @ basis
    if lam > 0:
        reg = np.ones(basis.shape[1]) if constant_reg \
            else regularizer_weights(max_degree)
        normal[np.diag_indices_from(normal)] += lam * reg
    try:
        cho = np.linalg.cholesky(normal)
    except np.linalg.LinAlgError:
        raise SingularSystem(
            "normal matrix is rank-deficient; pass lambda > 0") from None
    ident = np.eye(normal.shape[0])
    inv = np.linalg.solve(cho.T, np.linalg.solve(cho, ident))
    return inv @ ytw


def fit_sparse_regularized(samples: DirectionalSamples, max_degree: int,
                           lam: float = DEFAULT_LAMBDA,
                           constant_reg: bool = False) -> SHExpansion:
    """Weighted, Tikhonov-regularized least-squares SH fit.

    The penalty grows as e^l with the degree, damping high frequencies that
    sparse hemisphere samples cannot constrain. All channels share one
    factorization. With lam = 0 and a rank-deficient system this raises
    SingularSystem.
    """
    if len(samples) < 1:
        raise InsufficientSamples("need at least one sample")
    basis = eval_sh_basis(samples.theta, samples.phi, max_degree)
    op = solve_operator(basis, samples.weights, lam, max_degree, constant_reg)
    return SHExpansion(max_degree, op @ samples.values)


def fit_dense(samples: DirectionalSamples, max_degree: int) -> SHExpansion:
    """SH fit for samples covering the full sphere (e.g. a Fibonacci set).

    Solved as an unregularized weighted least-squares projection, which
    recovers bandlimited inputs exactly and agrees with uniform-weight
    quadrature to leading order on near-uniform point sets.
    """
    if len(samples) < num_coeffs(max_degree):
        raise InsufficientSamples(
            f"need at least {num_coeffs(max_degree)} samples for "
            f"max_degree {max_degree}, got {len(samples)}")
    return fit_sparse_regularized(samples, max_degree, lam=0.0)


def power_spectrum(expansion: SHExpansion) -> np.ndarray:
    """Per-degree sum of squared coefficients; shape (l*+1, channels)."""
    ells = degree_of_index(expansion.max_degree)
    sq = expansion.coeffs ** 2
    out = np.zeros((expansion.max_degree + 1, expansion.channels))
    np.add.at(out, ells, sq)
    return out


def convolve_isotropic(expansion: SHExpansion, kernel) -> SHExpansion:
    """Apply a zonal filter: out_lm = kernel[l] * in_lm."""
    kernel = np.asarray(kernel, dtype=np.float64)
    if kernel.shape[0] < expansion.max_degree + 1:
        raise ValueError("kernel must cover all degrees of the expansion")
    mult = kernel[degree_of_index(expansion.max_degree)]
    return SHExpansion(expansion.max_degree, expansion.coeffs * mult[:, None])


def zonal_kernel_spatial(kernel, max_degree: int, cos_gamma) -> np.ndarray:
    """Angular-domain kernel k(gamma) matching per-degree multipliers.

    k(gamma) = sum_l kernel[l] * (2l+1)/(4*pi) * P_l(cos gamma), so that
    brute-force spherical convolution with k equals coefficient-wise
    multiplication by kernel[l].
    """
    kernel = np.asarray(kernel, dtype=np.float64)
    cos_gamma = np.asarray(cos_gamma, dtype=np.float64)
    out = np.zeros_like(cos_gamma)
    for ell in range(max_degree + 1):
        out += kernel[ell] * (2 * ell + 1) / (4.0 * np.pi) \
            * eval_legendre(ell, cos_gamma)
    return out
