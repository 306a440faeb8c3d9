"""Per-texel SVBRDF optimization with the mixed frequency/directional model.

The forward model convolves the (shadow-attenuated) incoming light with the
specular filter in the SH domain, evaluates it at the observed outgoing
directions, and attenuates by Fresnel and masking in the directional
domain. Parameters are optimized jointly over all texels with a smoothed L1
data term, a total-variation regularizer on the parameter textures, and a
periodically refreshed shadowing expansion.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import brdf, sh, spectrum
from .errors import DegenerateIrradiance, NonFiniteLoss

PRIOR_MEAN = 0.5
MIN_ROUGHNESS = 1e-3


@dataclass
class OptimizerConfig:
    """Knobs for fitting; defaults follow the library-wide settings."""

    iterations: int = 100
    step_size: float = 1e-2
    shadow_refresh_interval: int = 10
    tv_weight: float = 1e-3
    weight_a: float = 1.0
    weight_b: float = 1.0
    max_degree: int = sh.DEFAULT_MAX_DEGREE
    lam: float = sh.DEFAULT_LAMBDA
    sigma: float = spectrum.DEFAULT_SIGMA
    grid_ks: int = spectrum.DEFAULT_GRID
    grid_alpha: int = spectrum.DEFAULT_GRID
    use_fresnel: bool = True
    shadowing: bool = True
    masking: bool = True
    l1_eps: float = 1e-6

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.shadow_refresh_interval < 1:
            raise ValueError("shadow refresh interval must be >= 1")
        if self.tv_weight < 0:
            raise ValueError("tv_weight must be >= 0")


@dataclass
class TexelRecord:
    """Per-UV-texel aggregation of observations and fitted state."""

    uv: tuple[int, int]
    samples: sh.DirectionalSamples        # outgoing observations B'
    light: sh.DirectionalSamples          # incoming light, local-frame Fibonacci
    reflected: sh.DirectionalSamples | None = None  # env at mirrored obs dirs
    params: brdf.PrincipledParams | None = None
    entropy: float = 1.0
    valid: bool = True


def sample_weight(theta, a: float = 1.0, b: float = 1.0) -> np.ndarray:
    """Cosine-falloff confidence max(0, 1 - (1 - cos(a*theta))^b)."""
    theta = np.asarray(theta, dtype=np.float64)
    return np.maximum(0.0, 1.0 - (1.0 - np.cos(a * theta)) ** b)


def alpha_lower_bound(n_views: int, t: float) -> float:
    """Smallest recoverable slope alpha' = sqrt(-ln t) / floor(sqrt(N))."""
    if not 0.0 < t < 1.0:
        raise ValueError("attenuation threshold must be in (0, 1)")
    if n_views < 1:
        raise ValueError("n_views must be >= 1")
    ell_star = int(np.sqrt(n_views))
    return float(np.sqrt(-np.log(t)) / ell_star)


def views_for_alpha(alpha: float) -> int:
    """Inverse sampling rule: view count scales as alpha^-2."""
    if alpha <= 0:
        raise ValueError("alpha must be > 0")
    return int(np.ceil(alpha ** -2))


def bandlimit_prefilter(env: sh.SHExpansion, n_views: int) -> sh.SHExpansion:
    """Attenuate environment coefficients with alpha' = n_views^(-1/2)."""
    if n_views < 1:
        raise ValueError("n_views must be >= 1")
    alpha_p = n_views ** -0.5
    return sh.convolve_isotropic(
        env, brdf.filter_kernel(alpha_p, env.max_degree))


def _prior_params(channels: int) -> brdf.PrincipledParams:
    return brdf.PrincipledParams(np.full(channels, PRIOR_MEAN),
                                 PRIOR_MEAN, PRIOR_MEAN)


def spectrum_pair(record: TexelRecord, cfg: OptimizerConfig) -> spectrum.SpectrumPair:
    """Fit incoming/outgoing expansions and collapse them to luma spectra.

    The incoming side uses the environment sampled at the mirrored
    observation directions so both expansions see the same sparse sampling.
    """
    fit_b = sh.fit_sparse_regularized(record.samples, cfg.max_degree, cfg.lam)
    fit_l = sh.fit_sparse_regularized(record.reflected, cfg.max_degree, cfg.lam)
    lum_b = spectrum.luminance(fit_b.coeffs)
    lum_l = spectrum.luminance(fit_l.coeffs)
    s_b = sh.power_spectrum(sh.SHExpansion(cfg.max_degree, lum_b))
    s_l = sh.power_spectrum(sh.SHExpansion(cfg.max_degree, lum_l))
    return spectrum.SpectrumPair(
        s_l=s_l, s_b=s_b,
        b00=fit_b.coeffs[0], l00=fit_l.coeffs[0],
        irradiance=brdf.irradiance(record.light))


def init_from_spectrum(record: TexelRecord,
                       cfg: OptimizerConfig) -> tuple[brdf.PrincipledParams, float]:
    """Grid-search initialization of the principled parameters plus entropy.

    Degenerate texels (no observations or near-zero irradiance) fall back
    to the prior mean with maximal entropy.
    """
    channels = record.samples.channels if record.samples is not None else 3
    if not record.valid or record.samples is None or len(record.samples) == 0:
        return _prior_params(channels), 1.0
    pair = spectrum_pair(record, cfg)
    grid = spectrum.grid_search(pair, cfg.grid_ks, cfg.grid_alpha, cfg.sigma)
    k_s, alpha = grid.argmax()
    try:
        k_d = spectrum.recover_diffuse(pair, k_s)
    except DegenerateIrradiance:
        return _prior_params(channels), 1.0
    base = k_d
    denom = float(np.max(base)) - brdf.R0_DIELECTRIC
    metallic = 0.0 if denom <= 0 else float(
        np.clip((k_s - brdf.R0_DIELECTRIC) / denom, 0.0, 1.0))
    roughness = float(np.sqrt(alpha))
    params = brdf.PrincipledParams(base, metallic, roughness)
    return params, grid.entropy


def params_to_vector(p: brdf.PrincipledParams) -> np.ndarray:
    return np.concatenate([p.base_color, [p.metallic, p.roughness]])


def vector_to_params(v: np.ndarray) -> brdf.PrincipledParams:
    return brdf.PrincipledParams(v[:-2].copy(), float(v[-2]), float(v[-1]))


class MixedPipelineLoss:
    """Vectorized loss/gradient of the mixed pipeline over all valid texels.

    Observations from every texel are flattened into shared arrays; the
    per-degree partial sums of (basis x shadowed-light coefficients) are
    cached so each iteration only touches (n_obs, l*+1) tensors. The
    shadowing expansion is treated as a constant between refreshes, so the
    gradient is exact for the loss actually being minimized.
    """

    def __init__(self, records: list[TexelRecord], texture_shape: tuple[int, int],
                 cfg: OptimizerConfig):
        self.cfg = cfg
        self.shape = texture_shape
        self.records = [r for r in records
                        if r.valid and r.samples is not None and len(r.samples)]
        if not self.records:
            raise ValueError("no valid texels to optimize")
        self.n_texels = len(self.records)
        self.channels = self.records[0].samples.channels
        self.n_params = self.channels + 2
        lmax = cfg.max_degree
        self.ells = np.arange(lmax + 1, dtype=np.float64)
        self.deg_idx = sh.degree_of_index(lmax)

        # flattened observation table
        tex_idx, theta, phi, w, obs = [], [], [], [], []
        for t, rec in enumerate(self.records):
            s = rec.samples
            tex_idx.append(np.full(len(s), t, dtype=np.int64))
            theta.append(s.theta)
            phi.append(s.phi)
            w.append(s.weights)
            obs.append(s.values)
        self.tex_idx = np.concatenate(tex_idx)
        self.theta_o = np.concatenate(theta)
        self.w = np.concatenate(w)
        self.obs = np.concatenate(obs, axis=0)
        self.n_obs = len(self.tex_idx)
        self.basis_o = sh.eval_sh_basis(self.theta_o, np.concatenate(phi), lmax)
        self.cos_o = np.cos(self.theta_o)

        # incoming light: all texels share one local-frame Fibonacci set
        ref = self.records[0].light
        self.light_theta = ref.theta
        for rec in self.records[1:]:
            if rec.light.theta.shape != ref.theta.shape or \
                    not np.allclose(rec.light.theta, ref.theta):
                raise ValueError("texels must share local light directions")
        self.light_values = np.stack([r.light.values for r in self.records])
        basis_l = sh.eval_sh_basis(ref.theta, ref.phi, lmax)
        self.fit_op = sh.solve_operator(basis_l, np.ones(len(ref)), cfg.lam, lmax)
        cos_l = np.clip(np.cos(ref.theta), 0.0, None)
        self.irradiance = (2.0 * np.pi / len(ref)) * np.einsum(
            'n,tnc->tc', cos_l, self.light_values)

        # texture layout for the TV term
        self.uv = np.array([r.uv for r in self.records], dtype=np.int64)
        self._tv_edges = self._build_tv_edges()

        self._u = None  # per-obs per-degree partial sums, (n_obs, l*+1, C)

    def _build_tv_edges(self) -> tuple[np.ndarray, np.ndarray]:
        grid = -np.ones(self.shape, dtype=np.int64)
        grid[self.uv[:, 0], self.uv[:, 1]] = np.arange(self.n_texels)
        pairs = []
        for axis in (0, 1):
            a = grid[:-1, :] if axis == 0 else grid[:, :-1]
            b = grid[1:, :] if axis == 0 else grid[:, 1:]
            ok = (a >= 0) & (b >= 0)
            pairs.append(np.stack([a[ok], b[ok]], axis=1))
        edges = np.concatenate(pairs, axis=0)
        return edges[:, 0], edges[:, 1]

    def refresh_shadow(self, params: np.ndarray) -> None:
        """Recompute the shadowed light fit at the current per-texel alpha."""
        cfg = self.cfg
        values = self.light_values
        if cfg.shadowing:
            alphas = np.maximum(params[:, -1], MIN_ROUGHNESS) ** 2
            g1 = brdf.smith_g1(alphas[:, None], self.light_theta[None, :])
            values = values * g1[:, :, None]
        lsh = np.einsum('kn,tnc->tkc', self.fit_op, values)
        # per-degree contraction: u[i, l, c] = sum_m Y_o[i, lm] * lsh[t_i, lm, c]
        u = np.zeros((self.n_obs, len(self.ells), self.channels))
        chunk = 65536
        for s in range(0, self.n_obs, chunk):
            e = min(s + chunk, self.n_obs)
            gathered = lsh[self.tex_idx[s:e]]  # (n, K, C)
            weighted = self.basis_o[s:e, :, None] * gathered
            for ell in range(len(self.ells)):
                cols = self.deg_idx == ell
                u[s:e, ell] = weighted[:, cols, :].sum(axis=1)
        self._u = u

    def loss_and_grad(self, params: np.ndarray) -> tuple[float, np.ndarray]:
        """Total loss and its gradient w.r.t. the (T, C+2) parameter array."""
        if self._u is None:
            self.refresh_shadow(params)
        cfg = self.cfg
        C = self.channels
        base = params[:, :C]
        metallic = params[:, C]
        rough = np.maximum(params[:, C + 1], MIN_ROUGHNESS)
        alpha = rough ** 2

        a_obs = alpha[self.tex_idx]
        kern = np.exp(-(a_obs[:, None] * self.ells) ** 2)        # (n, l*+1)
        conv = np.einsum('il,ilc->ic', kern, self._u)            # (n, C)
        dkern = -2.0 * a_obs[:, None] * self.ells ** 2 * kern
        dconv_da = np.einsum('il,ilc->ic', dkern, self._u)

        if cfg.masking:
            mask = brdf.smith_g1(a_obs, self.theta_o)
            dmask_da = brdf.smith_g1_dalpha(a_obs, self.theta_o)
        else:
            mask = np.ones(self.n_obs)
            dmask_da = np.zeros(self.n_obs)

        r0 = brdf.R0_DIELECTRIC + (base - brdf.R0_DIELECTRIC) * metallic[:, None]
        if cfg.use_fresnel:
            sfac = (1.0 - self.cos_o) ** 5
            f = r0[self.tex_idx] + (1.0 - r0[self.tex_idx]) * sfac[:, None]
            df_dr0 = 1.0 - sfac[:, None]
        else:
            f = np.repeat(np.mean(r0, axis=1)[self.tex_idx], C).reshape(-1, C)
            df_dr0 = np.full((self.n_obs, C), 1.0 / C)

        spec = mask[:, None] * f * conv
        diffuse = base * self.irradiance / (2.0 * np.pi)
        raw = diffuse[self.tex_idx] + spec
        # clamp matches the renderer's evaluation-time clamp at zero
        pred = np.clip(raw, 0.0, None)
        resid = pred - self.obs
        rho = np.sqrt(resid ** 2 + cfg.l1_eps)
        data_loss = float(np.sum(self.w[:, None] * rho))
        drho = self.w[:, None] * resid / rho * (raw > 0.0)       # (n, C)

        grad = np.zeros_like(params)
        # diffuse path: dB_c/dbase_c = E_c / (2 pi)
        gb = drho * self.irradiance[self.tex_idx] / (2.0 * np.pi)
        # Fresnel path: dB_c/dR0_c' is diagonal with fresnel, dense without
        common = drho * mask[:, None] * conv
        if cfg.use_fresnel:
            dr0 = common * df_dr0
        else:
            dr0 = np.sum(common * df_dr0, axis=1, keepdims=True) \
                * np.ones((1, C))
        gb = gb + dr0 * metallic[self.tex_idx, None]
        gm = np.sum(dr0 * (base - brdf.R0_DIELECTRIC)[self.tex_idx], axis=1)
        # alpha path through kernel and masking; dalpha/drough = 2 r
        dspec_da = f * (dmask_da[:, None] * conv + mask[:, None] * dconv_da)
        ga = np.sum(drho * dspec_da, axis=1) * 2.0 * rough[self.tex_idx]

        np.add.at(grad[:, :C], self.tex_idx, gb)
        grad[:, C] = np.bincount(self.tex_idx, weights=gm,
                                 minlength=self.n_texels)
        grad[:, C + 1] = np.bincount(self.tex_idx, weights=ga,
                                     minlength=self.n_texels)

        tv_loss = 0.0
        if cfg.tv_weight > 0 and len(self._tv_edges[0]):
            ia, ib = self._tv_edges
            diff = params[ia] - params[ib]
            rho_tv = np.sqrt(diff ** 2 + cfg.l1_eps)
            tv_loss = cfg.tv_weight * float(np.sum(rho_tv))
            dtv = cfg.tv_weight * diff / rho_tv
            np.add.at(grad, ia, dtv)
            np.add.at(grad, ib, -dtv)

        total = data_loss + tv_loss
        if not np.isfinite(total):
            raise NonFiniteLoss("loss is not finite; check input radiance")
        return total, grad

    def project(self, params: np.ndarray) -> np.ndarray:
        """Clamp parameters to their valid ranges."""
        out = np.clip(params, 0.0, 1.0)
        out[:, -1] = np.clip(out[:, -1], MIN_ROUGHNESS, 1.0)
        return out


def optimize(records: list[TexelRecord], texture_shape: tuple[int, int],
             cfg: OptimizerConfig) -> tuple[list[TexelRecord], list[float]]:
    """Adaptive-moment gradient descent over all valid texels jointly.

    Deterministic full-batch updates; the shadowing expansion is refreshed
    every cfg.shadow_refresh_interval iterations at the current roughness.
    Returns the records (params updated in place on valid texels) and the
    per-iteration loss trace; the returned parameters are the best seen,
    so the final loss never exceeds the initial one.
    """
    loss_fn = MixedPipelineLoss(records, texture_shape, cfg)
    params = np.stack([params_to_vector(r.params) for r in loss_fn.records])
    params = loss_fn.project(params)

    m = np.zeros_like(params)
    v = np.zeros_like(params)
    beta1, beta2, eps = 0.9, 0.999, 1e-8
    best_loss = np.inf
    best_params = params.copy()
    trace = []
    for it in range(cfg.iterations):
        if it % cfg.shadow_refresh_interval == 0:
            loss_fn.refresh_shadow(params)
        loss, grad = loss_fn.loss_and_grad(params)
        trace.append(loss)
        if loss < best_loss:
            best_loss = loss
            best_params = params.copy()
        m = beta1 * m + (1 - beta1) * grad
        v = beta2 * v + (1 - beta2) * grad ** 2
        mhat = m / (1 - beta1 ** (it + 1))
        vhat = v / (1 - beta2 ** (it + 1))
        params = loss_fn.project(
            params - cfg.step_size * mhat / (np.sqrt(vhat) + eps))

    trace.append(best_loss)
    for rec, vec in zip(loss_fn.records, best_params):
        rec.params = vector_to_params(vec)
    return records, trace
