"""Microfacet convolution BRDF model and principled-parameter mapping.

Outgoing radiance is modeled as a diffuse constant plus the incoming light
convolved with a zonal Gaussian filter in the SH domain, attenuated by
Fresnel and independent Smith shadowing/masking factors.

The diffuse constant follows the coefficient convention: the degree-0
outgoing coefficient is pi^(-1/2) * K_d * E, so the directional constant is
K_d * E / (2*pi).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import sh
from .errors import InsufficientSamples

# dielectric normal-incidence reflectance
R0_DIELECTRIC = 0.04


@dataclass
class BrdfParams:
    """Torrance-Sparrow style parameters: (K_d, K_s, alpha)."""

    k_d: np.ndarray  # diffuse reflectance per channel, in [0, 1]
    k_s: float       # specular reflectance, in [0, 1]
    alpha: float     # microfacet slope, in (0, 1]

    def __post_init__(self):
        self.k_d = np.atleast_1d(np.asarray(self.k_d, dtype=np.float64))
        if self.alpha <= 0:
            raise ValueError("alpha must be > 0")


@dataclass
class PrincipledParams:
    """Artist-facing triplet: base color, metallic, roughness, all in [0, 1]."""

    base_color: np.ndarray
    metallic: float
    roughness: float

    def __post_init__(self):
        self.base_color = np.atleast_1d(
            np.asarray(self.base_color, dtype=np.float64))


@dataclass
class ShadingContext:
    """Per-texel lighting state shared by forward renders.

    The shadowed expansion caches the fit of G_alpha(theta_i) * L at a given
    shadow_alpha; it may be stale relative to the alpha being optimized (the
    refresh schedule lives in the optimizer).
    """

    irradiance: np.ndarray        # E per channel, >= 0
    light: sh.SHExpansion         # L_lm
    shadowed: sh.SHExpansion      # fit of G_alpha(theta_i) * L
    shadow_alpha: float


def filter_coeff(alpha: float, degree) -> np.ndarray:
    """Per-degree specular filter e^(-(alpha*l)^2); equals 1 at l = 0."""
    degree = np.asarray(degree, dtype=np.float64)
    return np.exp(-(alpha * degree) ** 2)


def filter_kernel(alpha: float, max_degree: int) -> np.ndarray:
    """Filter multipliers for all degrees 0..max_degree."""
    return filter_coeff(alpha, np.arange(max_degree + 1))


def smith_g1(alpha, theta) -> np.ndarray:
    """Smith G1 term for the GGX distribution; 0 at and past grazing."""
    theta = np.asarray(theta, dtype=np.float64)
    alpha = np.asarray(alpha, dtype=np.float64)
    grazing = theta >= np.pi / 2
    tan2 = np.where(grazing, 0.0, np.tan(theta) ** 2)
    g = 2.0 / (1.0 + np.sqrt(1.0 + alpha ** 2 * tan2))
    return np.where(grazing, 0.0, g)


def smith_g1_dalpha(alpha, theta) -> np.ndarray:
    """Derivative of smith_g1 with respect to alpha."""
    theta = np.asarray(theta, dtype=np.float64)
    alpha = np.asarray(alpha, dtype=np.float64)
    grazing = theta >= np.pi / 2
    tan2 = np.where(grazing, 0.0, np.tan(theta) ** 2)
    s = np.sqrt(1.0 + alpha ** 2 * tan2)
    d = -2.0 * alpha * tan2 / (s * (1.0 + s) ** 2)
    return np.where(grazing, 0.0, d)


def fresnel_schlick(r0, theta_o) -> np.ndarray:
    """Schlick Fresnel with outgoing-angle-only dependence.

    Broadcasts r0 (per channel) against theta_o (per direction); returns
    shape (n, channels).
    """
    r0 = np.atleast_1d(np.asarray(r0, dtype=np.float64))
    theta_o = np.atleast_1d(np.asarray(theta_o, dtype=np.float64))
    fac = (1.0 - np.cos(theta_o)) ** 5
    return r0[None, :] + (1.0 - r0[None, :]) * fac[:, None]


def principled_to_ts(p: PrincipledParams,
                     use_fresnel: bool = True) -> tuple[BrdfParams, np.ndarray]:
    """Map the principled triplet to (K_d, K_s, alpha) plus Schlick R_0.

    With Fresnel enabled K_s = 1 and the specular strength lives in R_0;
    in the no-Fresnel ablation K_s carries R_0 directly (averaged over
    channels, since K_s is scalar).
    """
    r0 = R0_DIELECTRIC + (p.base_color - R0_DIELECTRIC) * p.metallic
    alpha = max(p.roughness ** 2, 1e-6)
    k_s = 1.0 if use_fresnel else float(np.mean(r0))
    return BrdfParams(k_d=p.base_color.copy(), k_s=k_s, alpha=alpha), r0


def shadow_attenuate(samples: sh.DirectionalSamples,
                     alpha: float) -> sh.DirectionalSamples:
    """Scale incoming radiance by the shadowing term G1(alpha, theta_i)."""
    g = smith_g1(alpha, samples.theta)
    return sh.DirectionalSamples(samples.theta, samples.phi,
                                 samples.values * g[:, None],
                                 samples.weights)


def irradiance(samples: sh.DirectionalSamples) -> np.ndarray:
    """Hemisphere quadrature of L * cos(theta) with uniform 2*pi/n weights."""
    if len(samples) == 0:
        raise InsufficientSamples("irradiance needs at least one sample")
    cos_t = np.clip(np.cos(samples.theta), 0.0, None)
    return (2.0 * np.pi / len(samples)) * (cos_t @ samples.values)


def diffuse_constant(k_d: np.ndarray, irr: np.ndarray) -> np.ndarray:
    """Directional diffuse radiance K_d * E / (2*pi), per channel."""
    return np.atleast_1d(k_d) * np.atleast_1d(irr) / (2.0 * np.pi)


def specular_expansion(ctx: ShadingContext, params: BrdfParams,
                       shadowing: bool = True) -> sh.SHExpansion:
    """SH coefficients of the specular lobe before directional attenuation."""
    light = ctx.shadowed if shadowing else ctx.light
    kern = params.k_s * filter_kernel(params.alpha, light.max_degree)
    return sh.convolve_isotropic(light, kern)


def render_outgoing(ctx: ShadingContext, params: BrdfParams,
                    theta_o, phi_o, r0=None,
                    shadowing: bool = True, masking: bool = True,
                    clamp: bool = True) -> np.ndarray:
    """Outgoing radiance at the given directions; shape (n, channels).

    B = K_d*E/(2*pi) + K_s * F(theta_o) * G_a(theta_o)
        * [S_a conv G_a(theta_i) L](omega_o)

    Fresnel is applied when r0 is given; shadowing uses the cached
    expansion in ctx (possibly stale alpha), masking always the current
    params.alpha. Negative SH ringing is clamped at evaluation time only.
    """
    theta_o = np.atleast_1d(np.asarray(theta_o, dtype=np.float64))
    spec = specular_expansion(ctx, params, shadowing=shadowing)
    out = spec.evaluate(theta_o, phi_o)
    if masking:
        out = out * smith_g1(params.alpha, theta_o)[:, None]
    if r0 is not None:
        out = out * fresnel_schlick(r0, theta_o)
    out = out + diffuse_constant(params.k_d, ctx.irradiance)[None, :]
    if clamp:
        out = np.clip(out, 0.0, None)
    return out
