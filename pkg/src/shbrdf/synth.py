"""Synthetic scene generation: environments, parameter textures, forward
renders, and deterministic benchmark bundles.

Two render modes exist on purpose. The convolution-model mode evaluates the
same frequency-domain forward model the fitter inverts; the quadrature mode
integrates the zonal specular kernel against raw environment lookups over
the hemisphere and shares no code with the fitting path beyond basic math,
so the two act as mutual oracles.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage

from . import brdf, sh
from .mesh import SurfaceGeometry, TexelTable, build_texel_table, \
    make_uv_sphere, save_obj
from .optimize import TexelRecord, alpha_lower_bound
from .raycast import RayCaster
from .scene import CameraView, EnvironmentMap, save_cameras, save_environment
from .exr import write_exr

QUADRATURE_DEGREE = 32
QUADRATURE_SAMPLES = 4096
PRESETS = ("sphere-4env", "figure3", "figure5", "viewsweep")


def blob_environment(blobs, height: int = 64,
                     ambient=0.05) -> EnvironmentMap:
    """Environment from directional lobes c * exp(k * (d . axis - 1)).

    blobs is a list of (axis, sharpness, rgb); large sharpness gives a
    near-dirac light, small gives low-frequency illumination.
    """
    h, w = height, 2 * height
    theta = (np.arange(h) + 0.5) / h * np.pi
    phi = (np.arange(w) + 0.5) / w * 2.0 * np.pi
    tt, pp = np.meshgrid(theta, phi, indexing="ij")
    dirs = sh.sph_to_unit(tt.ravel(), pp.ravel())
    data = np.full((h * w, 3), float(np.mean(ambient)) if np.isscalar(ambient)
                   else 0.0)
    if not np.isscalar(ambient):
        data[:] = np.asarray(ambient, dtype=np.float64)
    for axis, sharpness, rgb in blobs:
        axis = np.asarray(axis, dtype=np.float64)
        axis = axis / np.linalg.norm(axis)
        fall = np.exp(sharpness * (dirs @ axis - 1.0))
        data = data + fall[:, None] * np.asarray(rgb, dtype=np.float64)
    return EnvironmentMap(data.reshape(h, w, 3))


@dataclass
class ParameterTexture:
    """Ground-truth principled parameters on the UV grid."""

    base_color: np.ndarray   # (res, res, 3)
    metallic: np.ndarray     # (res, res)
    roughness: np.ndarray    # (res, res)

    @property
    def resolution(self) -> int:
        return self.base_color.shape[0]

    def at(self, i: int, j: int) -> brdf.PrincipledParams:
        return brdf.PrincipledParams(self.base_color[i, j].copy(),
                                     float(self.metallic[i, j]),
                                     float(self.roughness[i, j]))

    def stack(self) -> np.ndarray:
        """(res, res, 5) array: base RGB, metallic, roughness."""
        return np.concatenate([self.base_color,
                               self.metallic[..., None],
                               self.roughness[..., None]], axis=-1)


def smooth_field(res: int, rng: np.random.Generator, lo: float, hi: float,
                 coarse: int = 4) -> np.ndarray:
    """Low-frequency random field in [lo, hi] from an upsampled coarse grid."""
    grid = rng.random((coarse, coarse))
    out = ndimage.zoom(grid, res / coarse, order=1, mode="nearest",
                       grid_mode=True)
    return lo + (hi - lo) * np.clip(out, 0.0, 1.0)


def smooth_parameter_texture(res: int, seed: int = 0,
                             roughness_min: float = 0.35,
                             roughness_max: float = 0.85,
                             metallic_max: float = 0.8) -> ParameterTexture:
    """Smooth spatially varying ground truth, roughness bounded below."""
    rng = np.random.default_rng(seed)
    base = np.stack([smooth_field(res, rng, 0.1, 0.9) for _ in range(3)],
                    axis=-1)
    metallic = smooth_field(res, rng, 0.0, metallic_max)
    roughness = smooth_field(res, rng, roughness_min, roughness_max)
    return ParameterTexture(base, metallic, roughness)


def orbit_views(n: int, distance: float, image_size: int,
                focal: float) -> list[CameraView]:
    """n cameras on a Fibonacci sphere of the given radius, aimed at the
    origin with a deterministic up vector; images are left unset.
    """
    theta, phi = sh.fibonacci_sphere(n)
    centers = distance * sh.sph_to_unit(theta, phi)
    views = []
    cxy = (image_size - 1) / 2.0
    for c in centers:
        fwd = -c / np.linalg.norm(c)
        up0 = np.array([0.0, 0.0, 1.0])
        if abs(fwd @ up0) > 0.99:
            up0 = np.array([1.0, 0.0, 0.0])
        right = np.cross(up0, fwd)
        right /= np.linalg.norm(right)
        up = np.cross(fwd, right)
        ext = np.eye(4)
        ext[:3, :3] = np.stack([right, up, fwd], axis=1)
        ext[:3, 3] = c
        views.append(CameraView(focal, focal, cxy, cxy,
                                image_size, image_size, ext))
    return views


def _pixel_hits(view: CameraView, caster: RayCaster, geom: SurfaceGeometry,
                table: TexelTable):
    """Ray-cast all pixels; returns (pixel_idx, texel_i, texel_j) of hits
    that land on valid texels.
    """
    h, w = view.height, view.width
    xs, ys = np.meshgrid(np.arange(w), np.arange(h))
    d_cam = np.stack([(xs.ravel() - view.cx) / view.fx,
                      (ys.ravel() - view.cy) / view.fy,
                      np.ones(h * w)], axis=-1)
    d_world = d_cam @ view.rotation.T
    d_world /= np.linalg.norm(d_world, axis=-1, keepdims=True)
    origins = np.broadcast_to(view.center, (h * w, 3))
    t, face, bary = caster.closest_hit(origins, d_world)
    hit = face >= 0
    uv = np.einsum("nk,nkj->nj",
                   bary[hit], geom.uvs[geom.faces_vt[face[hit]]])
    res = table.resolution
    tj = np.clip((uv[:, 0] * res).astype(np.int64), 0, res - 1)
    ti = np.clip((uv[:, 1] * res).astype(np.int64), 0, res - 1)
    pix = np.nonzero(hit)[0]
    ok = table.valid[ti, tj]
    return pix[ok], ti[ok], tj[ok]


def _local_outgoing(table: TexelTable, ti, tj, cam_center):
    """Outgoing directions texel-center -> camera in each texel's frame."""
    pos = table.position[ti, tj]
    to_cam = cam_center[None, :] - pos
    to_cam /= np.linalg.norm(to_cam, axis=-1, keepdims=True)
    local = np.einsum("nkj,nk->nj", table.frame[ti, tj], to_cam)
    return sh.unit_to_sph(local)


class _ConvRenderer:
    """Per-texel forward model identical to the one the fitter inverts."""

    def __init__(self, env, table, texture, max_degree, lam,
                 use_fresnel, shadowing, masking):
        self.table = table
        self.texture = texture
        self.max_degree = max_degree
        self.use_fresnel = use_fresnel
        self.shadowing = shadowing
        self.masking = masking
        n_light = 4 * sh.num_coeffs(max_degree)
        lt, lp = sh.fibonacci_hemisphere(n_light)
        self.lt, self.lp = lt, lp
        self.local_light = sh.sph_to_unit(lt, lp)
        basis = sh.eval_sh_basis(lt, lp, max_degree)
        self.fit_op = sh.solve_operator(basis, np.ones(n_light), lam,
                                        max_degree)
        self.env = env
        self._ctx = {}

    def _context(self, i, j):
        key = (i, j)
        if key not in self._ctx:
            frame = self.table.frame[i, j]
            values = self.env.lookup_dirs(self.local_light @ frame.T)
            light = sh.DirectionalSamples(self.lt, self.lp, values)
            params, r0 = brdf.principled_to_ts(self.texture.at(i, j),
                                               self.use_fresnel)
            shadowed = brdf.shadow_attenuate(light, params.alpha) \
                if self.shadowing else light
            lsh = sh.SHExpansion(self.max_degree,
                                 self.fit_op @ light.values)
            ssh = sh.SHExpansion(self.max_degree,
                                 self.fit_op @ shadowed.values)
            ctx = brdf.ShadingContext(brdf.irradiance(light), lsh, ssh,
                                      params.alpha)
            self._ctx[key] = (ctx, params, r0)
        return self._ctx[key]

    def shade(self, ti, tj, theta_o, phi_o) -> np.ndarray:
        out = np.zeros((len(ti), 3))
        order = np.lexsort((tj, ti))
        ti, tj = ti[order], tj[order]
        start = 0
        while start < len(ti):
            end = start
            while end < len(ti) and ti[end] == ti[start] \
                    and tj[end] == tj[start]:
                end += 1
            sel = order[start:end]
            ctx, params, r0 = self._context(int(ti[start]), int(tj[start]))
            out[sel] = brdf.render_outgoing(
                ctx, params, theta_o[sel], phi_o[sel],
                r0=r0 if self.use_fresnel else None,
                shadowing=self.shadowing, masking=self.masking)
            start = end
        return out


class _QuadratureRenderer:
    """Hemisphere quadrature of the zonal specular kernel against raw
    environment lookups; independent of the harmonic fitting path.

    The zonal kernel is tabulated on a dense cos(gamma) grid per texel
    (one Legendre-table matvec) and linearly interpolated at the actual
    sample angles, keeping the brute-force integral affordable.
    """

    def __init__(self, env, table, texture, use_fresnel, shadowing, masking,
                 n_samples=QUADRATURE_SAMPLES, degree=QUADRATURE_DEGREE,
                 kernel_grid=4096):
        self.env = env
        self.table = table
        self.texture = texture
        self.use_fresnel = use_fresnel
        self.shadowing = shadowing
        self.masking = masking
        self.degree = degree
        lt, lp = sh.fibonacci_hemisphere(n_samples)
        self.local_light = sh.sph_to_unit(lt, lp)
        self.lt = lt
        self.d_omega = 2.0 * np.pi / n_samples
        self._cos_grid = np.linspace(-1.0, 1.0, kernel_grid)
        ells = np.arange(degree + 1, dtype=np.float64)
        from scipy.special import eval_legendre
        self._legendre = eval_legendre(ells[:, None], self._cos_grid[None, :])
        self._deg_scale = (2.0 * ells + 1.0) / (4.0 * np.pi)

    def shade(self, ti, tj, theta_o, phi_o) -> np.ndarray:
        out = np.zeros((len(ti), 3))
        order = np.lexsort((tj, ti))
        ti, tj = ti[order], tj[order]
        start = 0
        while start < len(ti):
            end = start
            while end < len(ti) and ti[end] == ti[start] \
                    and tj[end] == tj[start]:
                end += 1
            sel = order[start:end]
            i, j = int(ti[start]), int(tj[start])
            frame = self.table.frame[i, j]
            radiance = self.env.lookup_dirs(self.local_light @ frame.T)
            cos_i = np.clip(np.cos(self.lt), 0.0, None)
            irr = self.d_omega * (cos_i @ radiance)
            params, r0 = brdf.principled_to_ts(self.texture.at(i, j),
                                               self.use_fresnel)
            if self.shadowing:
                radiance = radiance * brdf.smith_g1(
                    params.alpha, self.lt)[:, None]
            w = brdf.filter_kernel(params.alpha, self.degree) \
                * self._deg_scale
            kern_tab = w @ self._legendre
            omega_o = sh.sph_to_unit(theta_o[sel], phi_o[sel])
            cos_g = np.clip(omega_o @ self.local_light.T, -1.0, 1.0)
            kern = np.interp(cos_g.ravel(), self._cos_grid,
                             kern_tab).reshape(cos_g.shape)
            spec = self.d_omega * params.k_s * (kern @ radiance)
            if self.masking:
                spec *= brdf.smith_g1(params.alpha, theta_o[sel])[:, None]
            if self.use_fresnel:
                spec *= brdf.fresnel_schlick(r0, theta_o[sel])
            b = self.texture.base_color[i, j] * irr / (2.0 * np.pi)
            out[sel] = np.clip(b[None, :] + spec, 0.0, None)
            start = end
        return out


def render_views(geom: SurfaceGeometry, table: TexelTable,
                 env: EnvironmentMap, texture: ParameterTexture,
                 views: list[CameraView], mode: str = "convolution-model",
                 max_degree: int = sh.DEFAULT_MAX_DEGREE,
                 lam: float = sh.DEFAULT_LAMBDA, use_fresnel: bool = True,
                 shadowing: bool = True, masking: bool = True) -> list[np.ndarray]:
    """Render every view; pixels off the surface (or on invalid texels)
    are black. Radiance is evaluated at the texel center of each hit so the
    forward data exactly matches the per-texel inverse problem.
    """
    if mode == "convolution-model":
        shader = _ConvRenderer(env, table, texture, max_degree, lam,
                               use_fresnel, shadowing, masking)
    elif mode == "quadrature":
        shader = _QuadratureRenderer(env, table, texture, use_fresnel,
                                     shadowing, masking)
    else:
        raise ValueError(f"unknown render mode: {mode}")
    caster = RayCaster(geom)
    # one shading row per (view, texel) pair; all pixels of a texel within
    # a view share the texel-center outgoing direction
    row_ti, row_tj, row_theta, row_phi = [], [], [], []
    pix_view, pix_idx, pix_row = [], [], []
    n_rows = 0
    for v, view in enumerate(views):
        pix, ti, tj = _pixel_hits(view, caster, geom, table)
        if not len(pix):
            continue
        keys = ti * table.resolution + tj
        uniq, inv = np.unique(keys, return_inverse=True)
        ui, uj = uniq // table.resolution, uniq % table.resolution
        theta_o, phi_o = _local_outgoing(table, ui, uj, view.center)
        vis = theta_o < np.pi / 2 - 1e-6
        row_of = -np.ones(len(uniq), dtype=np.int64)
        row_of[vis] = n_rows + np.arange(int(vis.sum()))
        n_rows += int(vis.sum())
        row_ti.append(ui[vis])
        row_tj.append(uj[vis])
        row_theta.append(theta_o[vis])
        row_phi.append(phi_o[vis])
        keep = row_of[inv] >= 0
        pix_view.append(np.full(int(keep.sum()), v, dtype=np.int64))
        pix_idx.append(pix[keep])
        pix_row.append(row_of[inv][keep])
    images = [np.zeros((v.height, v.width, 3)) for v in views]
    if n_rows:
        vals = shader.shade(np.concatenate(row_ti), np.concatenate(row_tj),
                            np.concatenate(row_theta),
                            np.concatenate(row_phi))
        pv = np.concatenate(pix_view)
        pi = np.concatenate(pix_idx)
        pr = np.concatenate(pix_row)
        for v in range(len(views)):
            m = pv == v
            images[v].reshape(-1, 3)[pi[m]] = vals[pr[m]]
    return images


def texture_records(table: TexelTable,
                    texture: ParameterTexture) -> list[TexelRecord]:
    """Wrap a ground-truth texture as records for export."""
    empty = sh.DirectionalSamples(np.zeros(0), np.zeros(0), np.zeros((0, 3)))
    recs = []
    for i, j in table.texel_indices:
        recs.append(TexelRecord((int(i), int(j)), empty, empty,
                                params=texture.at(i, j), entropy=0.0))
    return recs


def parameter_mse(est: ParameterTexture | np.ndarray,
                  truth: ParameterTexture | np.ndarray,
                  valid: np.ndarray) -> float:
    """Mean squared parameter error over valid texels (5 values each)."""
    a = est.stack() if isinstance(est, ParameterTexture) else est
    b = truth.stack() if isinstance(truth, ParameterTexture) else truth
    if a.shape != b.shape:
        raise ValueError("parameter stacks must share a shape")
    return float(np.mean((a[valid] - b[valid]) ** 2))


def figure_samples(n_keep: int = 88, n_hemisphere: int = 128,
                   alpha: float = 0.2, max_degree: int = 8, seed: int = 1,
                   spectrum_decay: float = 0.4):
    """Sparse masked observation sets of a random environment and of the
    same environment convolved with the specular filter at alpha.

    Keeps the n_keep hemisphere directions closest to the normal with
    cosine confidence weights. Both the filtered (outgoing) and unfiltered
    (incoming) signals are sampled at the same directions so a shared
    regularized fit sees identical sparsity, letting the fit bias cancel
    in the spectrum ratio. Returns (outgoing, incoming, light expansion).
    """
    rng = np.random.default_rng(seed)
    k = sh.num_coeffs(max_degree)
    deg = sh.degree_of_index(max_degree)
    coeffs = rng.normal(size=(k, 1)) * np.exp(-spectrum_decay * deg)[:, None]
    light = sh.SHExpansion(max_degree, coeffs)
    filtered = sh.convolve_isotropic(
        light, brdf.filter_kernel(alpha, max_degree))
    theta, phi = sh.fibonacci_hemisphere(n_hemisphere)
    keep = np.argsort(theta)[:n_keep]
    theta, phi = theta[keep], phi[keep]
    w = np.cos(theta)
    # constant offset keeps radiance positive; only degree 0 is affected
    outgoing = sh.DirectionalSamples(theta, phi,
                                     filtered.evaluate(theta, phi) + 2.0, w)
    incoming = sh.DirectionalSamples(theta, phi,
                                     light.evaluate(theta, phi) + 2.0, w)
    return outgoing, incoming, light


def environment_suite(height: int = 64) -> dict[str, EnvironmentMap]:
    """Four environments of decreasing angular frequency content."""
    axes = [np.array(a, dtype=np.float64) for a in
            ([0.3, 0.5, 0.9], [-0.8, 0.2, 0.5], [0.1, -0.9, 0.4])]
    colors = [(1.2, 1.0, 0.8), (0.7, 0.9, 1.1), (1.0, 0.8, 1.0)]
    sharp = {"env-sharp": 300.0, "env-mid": 60.0,
             "env-broad": 12.0, "env-smooth": 3.0}
    out = {}
    for name, k in sharp.items():
        # keep total energy roughly constant across sharpness levels
        gain = k / 2.0
        blobs = [(a, k, gain * np.array(c)) for a, c in zip(axes, colors)]
        out[name] = blob_environment(blobs, height, ambient=0.1)
    return out


def save_bundle(out_dir, geom, env, views, images, table, texture,
                meta: dict) -> None:
    """Write a complete deterministic scene bundle to disk."""
    from .scene import export_textures
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    save_obj(out_dir / "mesh.obj", geom)
    save_environment(out_dir / "env.exr", env)
    save_cameras(out_dir / "cameras.json", views)
    img_dir = out_dir / "images"
    img_dir.mkdir(exist_ok=True)
    for k, img in enumerate(images):
        write_exr(img_dir / f"view_{k:04d}.exr", img.astype(np.float32))
    export_textures(texture_records(table, texture), out_dir / "gt",
                    resolution=table.resolution)
    with open(out_dir / "truth.json", "w") as fh:
        json.dump(meta, fh, indent=1)


def generate_preset(name: str, out_dir, seed: int = 0,
                    texture_res: int = 32, image_size: int = 96,
                    n_views: int = 100, env_height: int = 64) -> dict:
    """Emit one of the deterministic benchmark bundles."""
    out_dir = Path(out_dir)
    if name == "figure3":
        outgoing, incoming, light = figure_samples(seed=1 + seed)
        out_dir.mkdir(parents=True, exist_ok=True)
        np.savez(out_dir / "samples.npz", theta=outgoing.theta,
                 phi=outgoing.phi, values=outgoing.values,
                 incoming=incoming.values, weights=outgoing.weights,
                 light_coeffs=light.coeffs)
        meta = {"preset": name, "alpha": 0.2, "n_samples": len(outgoing),
                "max_degree": light.max_degree}
        with open(out_dir / "truth.json", "w") as fh:
            json.dump(meta, fh, indent=1)
        return meta
    if name == "figure5":
        cases = figure5_cases()
        out_dir.mkdir(parents=True, exist_ok=True)
        arrays, meta = {}, {"preset": name, "cases": []}
        for key, (pair, desc) in cases.items():
            arrays[f"{key}_s_l"] = pair.s_l
            arrays[f"{key}_s_b"] = pair.s_b
            arrays[f"{key}_b00"] = pair.b00
            arrays[f"{key}_l00"] = pair.l00
            arrays[f"{key}_e"] = pair.irradiance
            meta["cases"].append({"name": key, **desc})
        np.savez(out_dir / "spectra.npz", **arrays)
        with open(out_dir / "truth.json", "w") as fh:
            json.dump(meta, fh, indent=1)
        return meta

    geom = make_uv_sphere(48, 24)
    table = build_texel_table(geom, texture_res)
    roughness_min = max(0.35, np.sqrt(alpha_lower_bound(n_views, 0.5)))
    texture = smooth_parameter_texture(texture_res, seed,
                                       roughness_min=roughness_min)
    focal = 1.6 * image_size
    meta = {"preset": name, "seed": seed, "texture_res": texture_res,
            "image_size": image_size, "roughness_min": roughness_min}
    if name == "sphere-4env":
        envs = environment_suite(env_height)
        meta["environments"] = sorted(envs)
        views = orbit_views(n_views, 3.0, image_size, focal)
        for env_name, env in envs.items():
            images = render_views(geom, table, env, texture, views)
            save_bundle(out_dir / env_name, geom, env, views, images,
                        table, texture, {**meta, "environment": env_name,
                                         "n_views": n_views})
        return meta
    if name == "viewsweep":
        env = environment_suite(env_height)["env-mid"]
        counts = (10, 25, 50, 100)
        meta["view_counts"] = list(counts)
        for n in counts:
            views = orbit_views(n, 3.0, image_size, focal)
            images = render_views(geom, table, env, texture, views)
            save_bundle(out_dir / f"views-{n:03d}", geom, env, views,
                        images, table, texture, {**meta, "n_views": n})
        return meta
    raise ValueError(f"unknown preset: {name}; choose from {PRESETS}")


def figure5_cases(max_degree: int = sh.DEFAULT_MAX_DEGREE):
    """Three (incoming light, material) cases of increasing ambiguity:
    near-dirac light, low-frequency light, and a near-diffuse material.
    Returns {name: (SpectrumPair, description)}.
    """
    from .spectrum import SpectrumPair

    ells = np.arange(max_degree + 1, dtype=np.float64)

    def pair(s_l, k_s, alpha, noise=0.0, seed=11):
        f2 = np.exp(-2.0 * (alpha * ells) ** 2)
        s_b = k_s ** 2 * f2 * s_l
        if noise:
            rng = np.random.default_rng(seed)
            s_b = np.clip(s_b + noise * rng.normal(size=s_b.shape), 0.0, None)
        e = np.full(3, 1.0)
        b00 = np.full(3, 0.5 / np.sqrt(np.pi) + k_s * 1.0)
        return SpectrumPair(s_l=s_l, s_b=s_b, b00=b00, l00=np.full(3, 1.0),
                            irradiance=e)

    # near-dirac: rising spectrum; a spherical dirac has S(l) ~ (2l+1)/(4 pi)
    dirac = (2.0 * ells + 1.0) / (8.0 * np.pi)
    lowfreq = 0.5 * np.exp(-1.2 * ells)
    lowfreq[0] = 0.5
    cases = {
        "dirac": (pair(dirac, 0.6, 0.25, noise=2e-3),
                  {"light": "near-dirac", "k_s": 0.6, "alpha": 0.25}),
        "lowfreq": (pair(lowfreq, 0.6, 0.25, noise=2e-3),
                    {"light": "low-frequency", "k_s": 0.6, "alpha": 0.25}),
        "diffuse": (pair(0.5 * dirac, 0.02, 0.25, noise=2e-3),
                    {"light": "near-dirac", "k_s": 0.02, "alpha": 0.25}),
    }
    return cases
