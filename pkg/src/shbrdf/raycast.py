"""Batch ray casting against triangle meshes via a median-split BVH."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mesh import SurfaceGeometry

LEAF_SIZE = 32
_EPS = 1e-12


def _intersect_tris(origins, dirs, v0, e1, e2):
    """Vectorized Moeller-Trumbore: rays (n, 3) against triangles (m, 3).

    Returns (t, u, v) each (n, m); misses hold +inf in t.
    """
    o = origins[:, None, :]
    d = dirs[:, None, :]
    p = np.cross(d, e2[None, :, :])
    det = np.einsum("nmk,mk->nm", p, e1)
    ok = np.abs(det) > _EPS
    inv = np.where(ok, 1.0 / np.where(ok, det, 1.0), 0.0)
    s = o - v0[None, :, :]
    u = np.einsum("nmk,nmk->nm", s, p) * inv
    q = np.cross(s, e1[None, :, :])
    v = np.einsum("nmk,nmk->nm", q, d) * inv
    t = np.einsum("nmk,mk->nm", q, e2) * inv
    hit = ok & (u >= 0.0) & (v >= 0.0) & (u + v <= 1.0) & (t > _EPS)
    return np.where(hit, t, np.inf), u, v


class RayCaster:
    """Closest-hit and occlusion queries over a triangle mesh.

    Triangles are partitioned into leaves by recursive median split on the
    widest centroid axis; queries test leaf bounding boxes with the slab
    method and run the triangle test only on leaves a ray overlaps.
    """

    def __init__(self, geom: SurfaceGeometry, leaf_size: int = LEAF_SIZE):
        tri = geom.vertices[geom.faces_v]          # (F, 3, 3)
        self._v0 = tri[:, 0]
        self._e1 = tri[:, 1] - tri[:, 0]
        self._e2 = tri[:, 2] - tri[:, 0]
        centroids = tri.mean(axis=1)
        order = np.arange(len(tri))
        leaves = []

        def split(idx):
            if len(idx) <= leaf_size:
                leaves.append(idx)
                return
            c = centroids[idx]
            axis = int(np.argmax(c.max(axis=0) - c.min(axis=0)))
            half = len(idx) // 2
            part = idx[np.argpartition(c[:, axis], half)]
            split(part[:half])
            split(part[half:])

        split(order)
        self._leaves = leaves
        lo = np.array([tri[idx].reshape(-1, 3).min(axis=0) for idx in leaves])
        hi = np.array([tri[idx].reshape(-1, 3).max(axis=0) for idx in leaves])
        self._box_lo = lo - 1e-9
        self._box_hi = hi + 1e-9

    def _leaf_mask(self, origins, dirs):
        """(n_rays, n_leaves) bool of slab-test overlaps."""
        inv = 1.0 / np.where(np.abs(dirs) < _EPS,
                             np.copysign(_EPS, dirs), dirs)
        t0 = (self._box_lo[None] - origins[:, None]) * inv[:, None]
        t1 = (self._box_hi[None] - origins[:, None]) * inv[:, None]
        tmin = np.minimum(t0, t1).max(axis=-1)
        tmax = np.maximum(t0, t1).min(axis=-1)
        return (tmax >= np.maximum(tmin, 0.0)) & (tmax > 0.0)

    def closest_hit(self, origins, dirs):
        """Nearest intersections for rays (n, 3).

        Returns (t, face, bary): t=inf and face=-1 for misses,
        bary is (n, 3) barycentric weights of the hit.
        """
        origins = np.atleast_2d(np.asarray(origins, dtype=np.float64))
        dirs = np.atleast_2d(np.asarray(dirs, dtype=np.float64))
        n = len(origins)
        best_t = np.full(n, np.inf)
        best_f = np.full(n, -1, dtype=np.int64)
        best_uv = np.zeros((n, 2))
        mask = self._leaf_mask(origins, dirs)
        for li, idx in enumerate(self._leaves):
            rays = np.nonzero(mask[:, li])[0]
            if len(rays) == 0:
                continue
            t, u, v = _intersect_tris(origins[rays], dirs[rays],
                                      self._v0[idx], self._e1[idx],
                                      self._e2[idx])
            k = np.argmin(t, axis=1)
            tb = t[np.arange(len(rays)), k]
            upd = tb < best_t[rays]
            rid = rays[upd]
            best_t[rid] = tb[upd]
            best_f[rid] = idx[k[upd]]
            best_uv[rid, 0] = u[np.arange(len(rays)), k][upd]
            best_uv[rid, 1] = v[np.arange(len(rays)), k][upd]
        bary = np.stack([1.0 - best_uv.sum(axis=-1),
                         best_uv[:, 0], best_uv[:, 1]], axis=-1)
        return best_t, best_f, bary

    def occluded(self, origins, dirs, max_t=np.inf):
        """True where any hit lies strictly before max_t (per ray)."""
        t, _, _ = self.closest_hit(origins, dirs)
        return t < np.broadcast_to(max_t, t.shape) * (1.0 - 1e-9)


def brute_force_hit(geom: SurfaceGeometry, origins, dirs):
    """All-triangle reference for closest_hit, used as a testing oracle."""
    origins = np.atleast_2d(np.asarray(origins, dtype=np.float64))
    dirs = np.atleast_2d(np.asarray(dirs, dtype=np.float64))
    tri = geom.vertices[geom.faces_v]
    t, u, v = _intersect_tris(origins, dirs, tri[:, 0],
                              tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
    k = np.argmin(t, axis=1)
    tb = t[np.arange(len(origins)), k]
    face = np.where(np.isfinite(tb), k, -1)
    ub = u[np.arange(len(origins)), k]
    vb = v[np.arange(len(origins)), k]
    bary = np.stack([1.0 - ub - vb, ub, vb], axis=-1)
    return tb, face, bary
