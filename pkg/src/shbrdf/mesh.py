"""Triangle meshes with UVs: OBJ I/O, UV-sphere generation, texel tables.

The texel table maps each cell of the UV grid to a surface position,
shading normal and deterministic tangent frame; it is the geometry view the
per-texel pipeline consumes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import UnsupportedFormat


@dataclass
class SurfaceGeometry:
    """Triangle mesh with per-vertex positions, normals and UVs."""

    vertices: np.ndarray   # (V, 3)
    normals: np.ndarray    # (Vn, 3), unit length
    uvs: np.ndarray        # (Vt, 2) in [0, 1]^2
    faces_v: np.ndarray    # (F, 3) vertex indices
    faces_vt: np.ndarray   # (F, 3) uv indices
    faces_vn: np.ndarray   # (F, 3) normal indices

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=np.float64)
        self.normals = np.asarray(self.normals, dtype=np.float64)
        self.uvs = np.asarray(self.uvs, dtype=np.float64)

    @property
    def num_faces(self) -> int:
        return len(self.faces_v)


@dataclass
class TexelTable:
    """Per-texel geometry on a res x res UV grid.

    Texel (i, j) covers u in [j/res, (j+1)/res), v in [i/res, (i+1)/res).
    frame stacks (tangent, bitangent, normal) as columns, so
    frame @ local_dir is the world direction.
    """

    resolution: int
    valid: np.ndarray      # (res, res) bool
    position: np.ndarray   # (res, res, 3)
    normal: np.ndarray     # (res, res, 3)
    frame: np.ndarray      # (res, res, 3, 3)

    @property
    def texel_indices(self) -> np.ndarray:
        """(n_valid, 2) array of (i, j) for valid texels, row-major order."""
        return np.argwhere(self.valid)


def load_obj(path) -> SurfaceGeometry:
    """Parse a Wavefront OBJ with positions, normals and UVs."""
    vs, vts, vns = [], [], []
    fv, fvt, fvn = [], [], []
    with open(path) as fh:
        for line in fh:
            parts = line.split()
            if not parts or parts[0].startswith("#"):
                continue
            if parts[0] == "v":
                vs.append([float(x) for x in parts[1:4]])
            elif parts[0] == "vt":
                vts.append([float(x) for x in parts[1:3]])
            elif parts[0] == "vn":
                vns.append([float(x) for x in parts[1:4]])
            elif parts[0] == "f":
                corners = []
                for c in parts[1:]:
                    bits = c.split("/")
                    if len(bits) != 3 or not bits[1] or not bits[2]:
                        raise UnsupportedFormat(
                            "faces must reference v/vt/vn indices")
                    corners.append([int(b) - 1 for b in bits])
                # fan-triangulate polygons
                for k in range(1, len(corners) - 1):
                    tri = [corners[0], corners[k], corners[k + 1]]
                    fv.append([t[0] for t in tri])
                    fvt.append([t[1] for t in tri])
                    fvn.append([t[2] for t in tri])
    if not fv:
        raise UnsupportedFormat(f"no faces found in {path}")
    return SurfaceGeometry(np.array(vs), np.array(vns), np.array(vts),
                           np.array(fv), np.array(fvt), np.array(fvn))


def save_obj(path, geom: SurfaceGeometry) -> None:
    with open(path, "w") as fh:
        fh.write("# shbrdf mesh\n")
        for v in geom.vertices:
            fh.write(f"v {v[0]:.9g} {v[1]:.9g} {v[2]:.9g}\n")
        for t in geom.uvs:
            fh.write(f"vt {t[0]:.9g} {t[1]:.9g}\n")
        for n in geom.normals:
            fh.write(f"vn {n[0]:.9g} {n[1]:.9g} {n[2]:.9g}\n")
        for a, b, c in zip(geom.faces_v, geom.faces_vt, geom.faces_vn):
            corners = " ".join(
                f"{a[k]+1}/{b[k]+1}/{c[k]+1}" for k in range(3))
            fh.write(f"f {corners}\n")


def make_uv_sphere(n_lon: int = 48, n_lat: int = 24,
                   radius: float = 1.0) -> SurfaceGeometry:
    """Unit UV sphere; u wraps longitude, v runs south pole to north pole."""
    iu = np.arange(n_lon + 1)
    iv = np.arange(n_lat + 1)
    uu, vv = np.meshgrid(iu / n_lon, iv / n_lat, indexing="ij")
    theta = np.pi * (1.0 - vv)
    phi = 2.0 * np.pi * uu
    st = np.sin(theta)
    normals = np.stack([st * np.cos(phi), st * np.sin(phi), np.cos(theta)],
                       axis=-1).reshape(-1, 3)
    vertices = radius * normals
    uvs = np.stack([uu, vv], axis=-1).reshape(-1, 2)

    def vid(i, j):
        return i * (n_lat + 1) + j

    faces = []
    for i in range(n_lon):
        for j in range(n_lat):
            a, b = vid(i, j), vid(i + 1, j)
            c, d = vid(i + 1, j + 1), vid(i, j + 1)
            if j > 0:              # skip degenerate tris at the south pole
                faces.append([a, b, c])
            if j < n_lat - 1:      # and at the north pole
                faces.append([a, c, d])
    faces = np.array(faces)
    return SurfaceGeometry(vertices, normals, uvs, faces, faces, faces)


def tangent_frame(normals: np.ndarray) -> np.ndarray:
    """Deterministic orthonormal frames from unit normals (Frisvad style).

    Returns (..., 3, 3) with tangent, bitangent, normal as columns.
    """
    n = np.asarray(normals, dtype=np.float64)
    single = n.ndim == 1
    n = np.atleast_2d(n)
    t = np.empty_like(n)
    b = np.empty_like(n)
    flip = n[:, 2] < -0.9999999
    a = 1.0 / (1.0 + np.where(flip, 1.0, n[:, 2]))
    bxy = -n[:, 0] * n[:, 1] * a
    t[:, 0] = 1.0 - n[:, 0] ** 2 * a
    t[:, 1] = bxy
    t[:, 2] = -n[:, 0]
    b[:, 0] = bxy
    b[:, 1] = 1.0 - n[:, 1] ** 2 * a
    b[:, 2] = -n[:, 1]
    t[flip] = [0.0, -1.0, 0.0]
    b[flip] = [-1.0, 0.0, 0.0]
    frame = np.stack([t, b, n], axis=-1)
    return frame[0] if single else frame


def build_texel_table(geom: SurfaceGeometry, resolution: int) -> TexelTable:
    """Rasterize the mesh's UV layout onto a res x res texel grid.

    Each covered texel center gets barycentrically interpolated position
    and normal; when triangles overlap in UV space the lowest face index
    wins, keeping the table deterministic.
    """
    res = resolution
    valid = np.zeros((res, res), dtype=bool)
    position = np.zeros((res, res, 3))
    normal = np.zeros((res, res, 3))
    # iterate high to low so lower face indices overwrite
    for f in range(geom.num_faces - 1, -1, -1):
        uv = geom.uvs[geom.faces_vt[f]]           # (3, 2)
        pos = geom.vertices[geom.faces_v[f]]
        nrm = geom.normals[geom.faces_vn[f]]
        d = np.cross(np.append(uv[1] - uv[0], 0), np.append(uv[2] - uv[0], 0))[2]
        if abs(d) < 1e-14:
            continue
        j0 = max(int(np.floor(uv[:, 0].min() * res - 0.5)), 0)
        j1 = min(int(np.ceil(uv[:, 0].max() * res + 0.5)), res - 1)
        i0 = max(int(np.floor(uv[:, 1].min() * res - 0.5)), 0)
        i1 = min(int(np.ceil(uv[:, 1].max() * res + 0.5)), res - 1)
        if j1 < j0 or i1 < i0:
            continue
        jj, ii = np.meshgrid(np.arange(j0, j1 + 1), np.arange(i0, i1 + 1))
        pu = (jj + 0.5) / res
        pv = (ii + 0.5) / res
        w1 = ((pu - uv[0, 0]) * (uv[2, 1] - uv[0, 1])
              - (pv - uv[0, 1]) * (uv[2, 0] - uv[0, 0])) / d
        w2 = ((uv[1, 0] - uv[0, 0]) * (pv - uv[0, 1])
              - (uv[1, 1] - uv[0, 1]) * (pu - uv[0, 0])) / d
        w0 = 1.0 - w1 - w2
        inside = (w0 >= -1e-9) & (w1 >= -1e-9) & (w2 >= -1e-9)
        if not inside.any():
            continue
        wsel = np.stack([w0[inside], w1[inside], w2[inside]], axis=-1)
        isel, jsel = ii[inside], jj[inside]
        valid[isel, jsel] = True
        position[isel, jsel] = wsel @ pos
        nvec = wsel @ nrm
        nvec /= np.linalg.norm(nvec, axis=-1, keepdims=True)
        normal[isel, jsel] = nvec
    frame = np.zeros((res, res, 3, 3))
    if valid.any():
        frame[valid] = tangent_frame(normal[valid])
    return TexelTable(res, valid, position, normal, frame)
