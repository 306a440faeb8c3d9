"""Scene ingestion and export: environment maps, calibrated cameras,
projection of captured images onto surface texels, and texture output.

Environment maps use the lat-long equirectangular convention with
theta = 0 at +z and phi = 0 at +x increasing eastward; a direction maps to
u = phi / 2pi, v = theta / pi with pixel centers at half-integer offsets.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage

from . import sh
from .errors import IoFailure, NonHdrInput, UnsupportedFormat
from .exr import read_exr, write_exr
from .mesh import SurfaceGeometry, TexelTable
from .optimize import TexelRecord, sample_weight
from .raycast import RayCaster

HDR_EXTENSIONS = {".exr"}
TEXTURE_NAMES = ("base_color", "roughness", "metallic", "entropy", "validity")


@dataclass
class EnvironmentMap:
    """Lat-long equirectangular grid of linear HDR RGB radiance."""

    data: np.ndarray  # (h, 2h, 3), finite, >= 0

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        if self.data.ndim != 3 or self.data.shape[2] != 3:
            raise ValueError("environment map must be (h, w, 3)")
        h, w, _ = self.data.shape
        if w != 2 * h:
            raise ValueError(f"lat-long map must have width = 2*height, "
                             f"got {w}x{h}")
        if not np.isfinite(self.data).all():
            raise ValueError("environment map contains non-finite values")
        if (self.data < 0).any():
            raise ValueError("environment map contains negative radiance")

    @property
    def height(self) -> int:
        return self.data.shape[0]

    def lookup(self, theta, phi) -> np.ndarray:
        """Bilinear radiance lookup; wraps in phi, clamps at the poles."""
        h = self.height
        w = 2 * h
        u = (np.asarray(phi, dtype=np.float64) / (2.0 * np.pi)) % 1.0
        v = np.asarray(theta, dtype=np.float64) / np.pi
        x = u * w - 0.5
        y = np.clip(v * h - 0.5, 0.0, h - 1.0)
        x0 = np.floor(x).astype(np.int64)
        y0 = np.floor(y).astype(np.int64)
        fx, fy = x - x0, y - y0
        x0m, x1m = x0 % w, (x0 + 1) % w
        y1 = np.minimum(y0 + 1, h - 1)
        d = self.data
        top = d[y0, x0m] * (1 - fx)[..., None] + d[y0, x1m] * fx[..., None]
        bot = d[y1, x0m] * (1 - fx)[..., None] + d[y1, x1m] * fx[..., None]
        return top * (1 - fy)[..., None] + bot * fy[..., None]

    def lookup_dirs(self, dirs) -> np.ndarray:
        theta, phi = sh.unit_to_sph(dirs)
        return self.lookup(theta, phi)

    def to_expansion(self, max_degree: int,
                     n_samples: int | None = None) -> sh.SHExpansion:
        """Dense least-squares projection onto the harmonic basis."""
        if n_samples is None:
            n_samples = max(4 * sh.num_coeffs(max_degree), 1024)
        theta, phi = sh.fibonacci_sphere(n_samples)
        samples = sh.DirectionalSamples(theta, phi, self.lookup(theta, phi))
        return sh.fit_dense(samples, max_degree)

    @classmethod
    def from_expansion(cls, expansion: sh.SHExpansion,
                       height: int) -> "EnvironmentMap":
        """Resynthesize a lat-long grid from coefficients (clamped at 0)."""
        h, w = height, 2 * height
        theta = (np.arange(h) + 0.5) / h * np.pi
        phi = (np.arange(w) + 0.5) / w * 2.0 * np.pi
        tt, pp = np.meshgrid(theta, phi, indexing="ij")
        vals = expansion.evaluate(tt.ravel(), pp.ravel())
        return cls(np.clip(vals.reshape(h, w, -1), 0.0, None))


def load_environment(path) -> EnvironmentMap:
    """Read a linear HDR lat-long map; LDR formats are rejected."""
    path = Path(path)
    if path.suffix.lower() not in HDR_EXTENSIONS:
        raise NonHdrInput(
            f"{path.suffix} is not an HDR format; linear EXR input required")
    data = read_exr(path)
    if data.shape[2] == 1:
        data = np.repeat(data, 3, axis=2)
    if not np.isfinite(data).all():
        raise UnsupportedFormat(f"{path} contains non-finite pixels")
    n_neg = int((data < 0).sum())
    if n_neg:
        warnings.warn(f"{path}: clamped {n_neg} negative pixels to 0")
        data = np.clip(data, 0.0, None)
    return EnvironmentMap(data)


def save_environment(path, env: EnvironmentMap) -> None:
    write_exr(path, env.data.astype(np.float32))


def sample_incoming(env: EnvironmentMap, frame: np.ndarray,
                    n: int) -> sh.DirectionalSamples:
    """Environment radiance at n Fibonacci directions on the frame's
    upper hemisphere; directions are local, radiance is looked up in world.
    """
    if n < 1:
        raise ValueError("sample count must be >= 1")
    theta, phi = sh.fibonacci_hemisphere(n)
    world = sh.sph_to_unit(theta, phi) @ np.asarray(frame).T
    return sh.DirectionalSamples(theta, phi, env.lookup_dirs(world))


@dataclass
class CameraView:
    """Calibrated pinhole view: intrinsics, world-from-camera pose, image.

    The camera looks down its +z axis; pixel (u, v) back-projects to
    ((u - cx)/fx, (v - cy)/fy, 1) in camera space.
    """

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    extrinsics: np.ndarray   # (4, 4) row-major world-from-camera
    image: np.ndarray | None = None   # (height, width, 3) linear HDR

    def __post_init__(self):
        self.extrinsics = np.asarray(self.extrinsics, dtype=np.float64)
        if self.extrinsics.shape != (4, 4):
            raise ValueError("extrinsics must be 4x4")
        r = self.rotation
        if np.abs(r @ r.T - np.eye(3)).max() > 1e-6:
            raise ValueError("extrinsic rotation is not orthonormal")
        if self.image is not None:
            self.image = np.asarray(self.image, dtype=np.float64)
            if self.image.shape[:2] != (self.height, self.width):
                raise ValueError("image dimensions do not match intrinsics")

    @property
    def rotation(self) -> np.ndarray:
        return self.extrinsics[:3, :3]

    @property
    def center(self) -> np.ndarray:
        return self.extrinsics[:3, 3]

    def project(self, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """World points (n, 3) -> pixel coords (n, 2) and validity mask."""
        pc = (np.atleast_2d(points) - self.center) @ self.rotation
        z = pc[:, 2]
        ok = z > 1e-9
        zs = np.where(ok, z, 1.0)
        px = self.fx * pc[:, 0] / zs + self.cx
        py = self.fy * pc[:, 1] / zs + self.cy
        ok &= (px >= 0) & (px <= self.width - 1) \
            & (py >= 0) & (py <= self.height - 1)
        return np.stack([px, py], axis=-1), ok

    def sample_image(self, pixels: np.ndarray) -> np.ndarray:
        """Bilinear HDR lookup at pixel coordinates (n, 2)."""
        x = np.clip(pixels[:, 0], 0.0, self.width - 1.0)
        y = np.clip(pixels[:, 1], 0.0, self.height - 1.0)
        x0 = np.minimum(np.floor(x).astype(np.int64), self.width - 2) \
            if self.width > 1 else np.zeros(len(x), dtype=np.int64)
        y0 = np.minimum(np.floor(y).astype(np.int64), self.height - 2) \
            if self.height > 1 else np.zeros(len(y), dtype=np.int64)
        fx, fy = x - x0, y - y0
        img = self.image
        x1 = np.minimum(x0 + 1, self.width - 1)
        y1 = np.minimum(y0 + 1, self.height - 1)
        top = img[y0, x0] * (1 - fx)[:, None] + img[y0, x1] * fx[:, None]
        bot = img[y1, x0] * (1 - fx)[:, None] + img[y1, x1] * fx[:, None]
        return top * (1 - fy)[:, None] + bot * fy[:, None]


def camera_to_dict(view: CameraView) -> dict:
    return {
        "intrinsics": {"fx": view.fx, "fy": view.fy, "cx": view.cx,
                       "cy": view.cy, "width": view.width,
                       "height": view.height},
        "extrinsics": [[float(x) for x in row] for row in view.extrinsics],
    }


def camera_from_dict(d: dict, image=None) -> CameraView:
    i = d["intrinsics"]
    return CameraView(i["fx"], i["fy"], i["cx"], i["cy"],
                      int(i["width"]), int(i["height"]),
                      np.array(d["extrinsics"]), image)


def save_cameras(path, views: list[CameraView]) -> None:
    with open(path, "w") as fh:
        json.dump({"cameras": [camera_to_dict(v) for v in views]}, fh,
                  indent=1)


def load_cameras(path) -> list[CameraView]:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise IoFailure(f"cannot read camera file {path}: {exc}") from exc
    return [camera_from_dict(d) for d in doc["cameras"]]


def project_observations(views: list[CameraView], geom: SurfaceGeometry,
                         table: TexelTable, weight_a: float = 1.0,
                         weight_b: float = 1.0,
                         caster: RayCaster | None = None) -> list:
    """Gather per-texel outgoing-radiance observations from all views.

    For each valid texel and each view where the texel is front-facing,
    inside the frustum, and unoccluded (ray cast from the camera center),
    records the local outgoing direction, the bilinear image radiance and
    the view-angle confidence weight. Returns DirectionalSamples (or None
    when no view sees the texel) aligned with table.texel_indices.
    """
    if not views:
        raise ValueError("at least one view is required")
    if caster is None:
        caster = RayCaster(geom)
    idx = table.texel_indices
    pos = table.position[idx[:, 0], idx[:, 1]]
    nrm = table.normal[idx[:, 0], idx[:, 1]]
    frames = table.frame[idx[:, 0], idx[:, 1]]
    n_tex = len(idx)
    acc = [([], [], [], []) for _ in range(n_tex)]
    for view in views:
        to_cam = view.center[None, :] - pos
        dist = np.linalg.norm(to_cam, axis=-1)
        omega = to_cam / dist[:, None]
        front = np.einsum("nk,nk->n", nrm, omega) > 1e-9
        pixels, in_view = view.project(pos)
        cand = np.nonzero(front & in_view)[0]
        if len(cand) == 0:
            continue
        t_hit, _, _ = caster.closest_hit(
            np.broadcast_to(view.center, (len(cand), 3)), -omega[cand])
        visible = t_hit >= dist[cand] * (1.0 - 1e-6)
        sel = cand[visible]
        if len(sel) == 0:
            continue
        local = np.einsum("nkj,nk->nj", frames[sel], omega[sel])
        theta, phi = sh.unit_to_sph(local)
        radiance = view.sample_image(pixels[sel])
        w = sample_weight(theta, weight_a, weight_b)
        for i, t, p, v, ww in zip(sel, theta, phi, radiance, w):
            acc[i][0].append(t)
            acc[i][1].append(p)
            acc[i][2].append(v)
            acc[i][3].append(ww)
    out = []
    for t, p, v, w in acc:
        if not t:
            out.append(None)
            continue
        out.append(sh.DirectionalSamples(
            np.array(t), np.array(p), np.array(v), np.array(w)))
    return out


def build_texel_records(env: EnvironmentMap, table: TexelTable,
                        observations: list, max_degree: int,
                        light_samples: int | None = None) -> list[TexelRecord]:
    """Assemble optimizer inputs: per-texel observations, incoming light on
    a shared local Fibonacci set, and the environment at the mirrored
    observation directions (the reflected-lobe proxy for spectra).
    """
    if light_samples is None:
        light_samples = 4 * sh.num_coeffs(max_degree)
    idx = table.texel_indices
    frames = table.frame[idx[:, 0], idx[:, 1]]
    lt, lp = sh.fibonacci_hemisphere(light_samples)
    local_light = sh.sph_to_unit(lt, lp)
    records = []
    for (i, j), frame, obs in zip(idx, frames, observations):
        light = sh.DirectionalSamples(
            lt, lp, env.lookup_dirs(local_light @ frame.T))
        if obs is None or len(obs) == 0:
            records.append(TexelRecord((int(i), int(j)),
                                       sh.DirectionalSamples(
                                           np.zeros(0), np.zeros(0),
                                           np.zeros((0, 3))),
                                       light, valid=False))
            continue
        mirrored = sh.sph_to_unit(obs.theta, obs.phi) * [-1.0, -1.0, 1.0]
        reflected = sh.DirectionalSamples(
            obs.theta, obs.phi, env.lookup_dirs(mirrored @ frame.T),
            obs.weights)
        records.append(TexelRecord((int(i), int(j)), obs, light, reflected))
    return records


def _fill_holes(array: np.ndarray, valid: np.ndarray) -> np.ndarray:
    """Replace invalid texels by their nearest valid neighbor's value."""
    if valid.all() or not valid.any():
        return array
    _, (iy, ix) = ndimage.distance_transform_edt(~valid, return_indices=True)
    return array[iy, ix]


def export_textures(records: list[TexelRecord], out_dir,
                    resolution: int = 512, png_preview: bool = False) -> dict:
    """Write parameter maps as float EXRs (plus an optional sRGB preview).

    Records live on their own UV grid; maps are nearest-neighbor upsampled
    to the requested resolution. Invalid texels are hole-filled in the
    parameter maps, set to entropy 1, and left marked in the validity mask.
    """
    grid = max(r.uv[0] for r in records) + 1
    grid = max(grid, max(r.uv[1] for r in records) + 1)
    base = np.zeros((grid, grid, 3))
    rough = np.zeros((grid, grid))
    metal = np.zeros((grid, grid))
    ent = np.ones((grid, grid))
    valid = np.zeros((grid, grid), dtype=bool)
    for r in records:
        if r.valid and r.params is not None:
            i, j = r.uv
            base[i, j] = r.params.base_color
            rough[i, j] = r.params.roughness
            metal[i, j] = r.params.metallic
            ent[i, j] = r.entropy
            valid[i, j] = True
    base = _fill_holes(base, valid)
    rough = _fill_holes(rough, valid)
    metal = _fill_holes(metal, valid)

    if resolution != grid:
        rep = np.clip((np.arange(resolution) * grid) // resolution,
                      0, grid - 1)
        base, rough, metal, ent, valid = (
            a[rep][:, rep] for a in (base, rough, metal, ent, valid))

    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        maps = {"base_color": base.astype(np.float32),
                "roughness": rough.astype(np.float32),
                "metallic": metal.astype(np.float32),
                "entropy": ent.astype(np.float32),
                "validity": valid.astype(np.float32)}
        paths = {}
        for name, arr in maps.items():
            paths[name] = out_dir / f"{name}.exr"
            write_exr(paths[name], arr)
        if png_preview:
            from PIL import Image
            srgb = np.where(base <= 0.0031308, 12.92 * base,
                            1.055 * np.clip(base, 0, None) ** (1 / 2.4) - 0.055)
            srgb = (np.clip(srgb, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)
            paths["preview"] = out_dir / "base_color_preview.png"
            Image.fromarray(srgb).save(paths["preview"])
    except OSError as exc:
        raise IoFailure(f"texture export to {out_dir} failed: {exc}") from exc
    return paths


def import_textures(in_dir) -> dict:
    """Read back the maps written by export_textures as float arrays."""
    in_dir = Path(in_dir)
    out = {}
    for name in TEXTURE_NAMES:
        path = in_dir / f"{name}.exr"
        if not path.exists():
            raise IoFailure(f"missing texture map: {path}")
        arr = read_exr(path).astype(np.float64)
        out[name] = arr if name == "base_color" else arr[:, :, 0]
    out["validity"] = out["validity"] > 0.5
    return out
