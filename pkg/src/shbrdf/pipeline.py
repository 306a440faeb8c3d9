"""End-to-end fitting pipeline: projection, spectrum initialization,
optimization, and evaluation utilities shared by the CLI and tests."""

from __future__ import annotations

import time

import numpy as np

from . import sh
from .mesh import SurfaceGeometry, TexelTable
from .optimize import (OptimizerConfig, TexelRecord, bandlimit_prefilter,
                       init_from_spectrum, optimize)
from .scene import EnvironmentMap, build_texel_records, project_observations

PREFILTER_DEGREE = 20


def prefilter_environment(env: EnvironmentMap,
                          n_views: int,
                          max_degree: int = PREFILTER_DEGREE) -> EnvironmentMap:
    """Bandlimit the environment to what the view count can resolve.

    Projects the map onto the harmonic basis, attenuates with the
    sampling-rate filter, and resynthesizes the lat-long grid.
    """
    expansion = env.to_expansion(max_degree)
    return EnvironmentMap.from_expansion(
        bandlimit_prefilter(expansion, n_views), env.height)


def fit_scene(env: EnvironmentMap, geom: SurfaceGeometry, table: TexelTable,
              views: list, cfg: OptimizerConfig | None = None,
              spectrum_only: bool = False, prefilter: bool = True,
              ) -> tuple[list[TexelRecord], dict]:
    """Project views onto texels, initialize from spectra, and optimize.

    Returns the fitted records plus a stage-timing dictionary. With
    spectrum_only the grid-argmax parameters are returned unoptimized.
    """
    if cfg is None:
        cfg = OptimizerConfig()
    timings = {}
    t0 = time.perf_counter()
    if prefilter:
        env = prefilter_environment(env, len(views))
    timings["prefilter"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    observations = project_observations(views, geom, table,
                                        cfg.weight_a, cfg.weight_b)
    timings["project"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    records = build_texel_records(env, table, observations, cfg.max_degree)
    timings["records"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    for rec in records:
        rec.params, rec.entropy = init_from_spectrum(rec, cfg)
    timings["spectrum_init"] = time.perf_counter() - t0

    if not spectrum_only:
        t0 = time.perf_counter()
        shape = (table.resolution, table.resolution)
        _, trace = optimize(records, shape, cfg)
        timings["optimize"] = time.perf_counter() - t0
        timings["final_loss"] = trace[-1]
    return records, timings


def records_to_stack(records: list[TexelRecord],
                     resolution: int) -> tuple[np.ndarray, np.ndarray]:
    """Pack fitted records into a (res, res, 5) parameter stack plus a
    validity mask; invalid texels hold zeros.
    """
    stack = np.zeros((resolution, resolution, 5))
    valid = np.zeros((resolution, resolution), dtype=bool)
    for r in records:
        if r.valid and r.params is not None:
            i, j = r.uv
            stack[i, j, :3] = r.params.base_color
            stack[i, j, 3] = r.params.metallic
            stack[i, j, 4] = r.params.roughness
            valid[i, j] = True
    return stack, valid


def entropy_map(records: list[TexelRecord], resolution: int) -> np.ndarray:
    """Per-texel normalized entropy; unobserved texels carry entropy 1."""
    out = np.ones((resolution, resolution))
    for r in records:
        if r.valid:
            out[r.uv[0], r.uv[1]] = r.entropy
    return out


def merge_records(runs: list[list[TexelRecord]]) -> list[TexelRecord]:
    """Per-texel argmin-entropy merge across runs over the same UV layout."""
    from .errors import LayoutMismatch
    from .spectrum import merge_by_entropy

    if len(runs) < 2:
        raise ValueError("merging needs at least two runs")
    layout = [r.uv for r in runs[0]]
    for run in runs[1:]:
        if [r.uv for r in run] != layout:
            raise LayoutMismatch("runs cover different UV layouts")
    merged = []
    for texels in zip(*runs):
        valid = [t for t in texels if t.valid and t.params is not None]
        if not valid:
            merged.append(texels[0])
            continue
        params = merge_by_entropy([(t.params, t.entropy) for t in valid])
        best = min(valid, key=lambda t: t.entropy)
        merged.append(TexelRecord(texels[0].uv, best.samples, best.light,
                                  best.reflected, params, best.entropy))
    return merged
