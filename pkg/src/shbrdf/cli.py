"""Command-line entry points: fit, entropy, synth, merge, bench.

Exit codes: 0 success, 2 input error, 3 numerical failure. Outputs are
staged to a temporary directory and renamed into place so failed runs
leave no partial results; every run writes a JSON manifest with the
resolved configuration, stage timings, and output hashes.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import shutil
import sys
import tempfile
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import sh, spectrum
from .errors import ShBrdfError
from .exr import read_exr, write_exr
from .mesh import build_texel_table, load_obj
from .optimize import OptimizerConfig
from .pipeline import entropy_map, fit_scene, records_to_stack
from .scene import load_cameras, load_environment
from .synth import PRESETS, generate_preset

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_NUMERIC = 3
DEFAULT_TEXTURE_RES = 64
TEXTURE_FILES = ("base_color.exr", "roughness.exr", "metallic.exr",
                 "entropy.exr", "validity.exr")


@dataclass
class RunManifest:
    """Reproducibility record written at the end of every command."""

    command: str
    config: dict
    timings: dict = field(default_factory=dict)
    hashes: dict = field(default_factory=dict)

    def write(self, path) -> None:
        tmp = Path(path).with_suffix(".tmp")
        with open(tmp, "w") as fh:
            json.dump(asdict(self), fh, indent=1, sort_keys=True)
        os.replace(tmp, path)


def _sha256(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _hash_tree(root) -> dict:
    root = Path(root)
    return {str(p.relative_to(root)): _sha256(p)
            for p in sorted(root.rglob("*")) if p.is_file()}


def _load_config_file(path) -> dict:
    """Flat key=value file; blank lines and #-comments ignored."""
    out = {}
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ValueError(f"malformed config line: {line!r}")
            key, val = line.split("=", 1)
            out[key.strip()] = val.strip()
    return out


def _coerce(value: str, target_type):
    if target_type is bool:
        return value.lower() in ("1", "true", "yes", "on")
    return target_type(value)


def build_optimizer_config(config_path=None, overrides=None) -> OptimizerConfig:
    """OptimizerConfig from defaults, a config file, and key=value flags."""
    raw = {}
    if config_path:
        raw.update(_load_config_file(config_path))
    for item in overrides or []:
        if "=" not in item:
            raise ValueError(f"expected key=value, got {item!r}")
        key, val = item.split("=", 1)
        raw[key.strip()] = val.strip()
    known = {f.name: f.type for f in fields(OptimizerConfig)}
    types = {"iterations": int, "shadow_refresh_interval": int,
             "max_degree": int, "grid_ks": int, "grid_alpha": int,
             "use_fresnel": bool, "shadowing": bool, "masking": bool}
    kwargs = {}
    for key, val in raw.items():
        if key not in known:
            raise ValueError(f"unknown config key: {key}")
        kwargs[key] = _coerce(val, types.get(key, float))
    return OptimizerConfig(**kwargs)


def _set_threads(n: int | None) -> None:
    if n is None:
        return
    try:
        import threadpoolctl
        threadpoolctl.threadpool_limits(n)
    except ImportError:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS",
                    "MKL_NUM_THREADS"):
            os.environ[var] = str(n)


def _load_scene(args):
    env = load_environment(args.env)
    geom = load_obj(args.mesh)
    views = load_cameras(args.cameras)
    image_dir = Path(args.images)
    for k, view in enumerate(views):
        path = image_dir / f"view_{k:04d}.exr"
        if not path.exists():
            raise ShBrdfError(f"missing image for view {k}: {path}")
        view.image = read_exr(path).astype(np.float64)
        if view.image.shape[:2] != (view.height, view.width):
            raise ShBrdfError(f"{path}: size does not match intrinsics")
    return env, geom, views


class _StagedOutput:
    """Stage results in a temp dir; rename into place only on success."""

    def __init__(self, final):
        self.final = Path(final)

    def __enter__(self):
        self.final.parent.mkdir(parents=True, exist_ok=True)
        self.tmp = Path(tempfile.mkdtemp(
            prefix=self.final.name + ".tmp-", dir=self.final.parent))
        return self.tmp

    def __exit__(self, exc_type, exc, tb):
        if exc_type is None:
            if self.final.exists():
                shutil.rmtree(self.final)
            os.replace(self.tmp, self.final)
        else:
            shutil.rmtree(self.tmp, ignore_errors=True)
        return False


def cmd_fit(args) -> int:
    from .scene import export_textures

    cfg = build_optimizer_config(args.config, args.set)
    env, geom, views = _load_scene(args)
    table = build_texel_table(geom, args.texture_res)
    t0 = time.perf_counter()
    records, timings = fit_scene(env, geom, table, views, cfg,
                                 spectrum_only=args.spectrum_only,
                                 prefilter=not args.no_prefilter)
    timings["total"] = time.perf_counter() - t0
    stack, valid = records_to_stack(records, args.texture_res)
    with _StagedOutput(args.out) as tmp:
        export_textures(records, tmp, resolution=args.resolution,
                        png_preview=args.preview)
        manifest = RunManifest(
            "fit",
            {**vars_config(cfg), "texture_res": args.texture_res,
             "resolution": args.resolution,
             "spectrum_only": args.spectrum_only, "n_views": len(views)},
            {k: round(v, 4) for k, v in timings.items()},
            _hash_tree(tmp))
        manifest.write(tmp / "manifest.json")
    final_loss = timings.pop("final_loss", None)
    for stage, seconds in timings.items():
        print(f"{stage}: {seconds:.2f}s")
    if final_loss is not None:
        print(f"final loss: {final_loss:.4f}")
    print(f"fit complete: {int(valid.sum())} texels -> {args.out}")
    return EXIT_OK


def cmd_entropy(args) -> int:
    cfg = build_optimizer_config(args.config, args.set)
    if args.grid:
        n = int(round(np.sqrt(args.grid)))
        cfg = OptimizerConfig(**{**vars_config(cfg),
                                 "grid_ks": n, "grid_alpha": n})
    env, geom, views = _load_scene(args)
    table = build_texel_table(geom, args.texture_res)
    t0 = time.perf_counter()
    records, timings = fit_scene(env, geom, table, views, cfg,
                                 spectrum_only=True,
                                 prefilter=not args.no_prefilter)
    timings["total"] = time.perf_counter() - t0
    ent = entropy_map(records, args.texture_res).astype(np.float32)
    with _StagedOutput(args.out) as tmp:
        write_exr(tmp / "entropy.exr", ent)
        manifest = RunManifest(
            "entropy",
            {**vars_config(cfg), "texture_res": args.texture_res,
             "n_views": len(views)},
            {k: round(v, 4) for k, v in timings.items()},
            _hash_tree(tmp))
        manifest.write(tmp / "manifest.json")
    timings.pop("final_loss", None)
    for stage, seconds in timings.items():
        print(f"{stage}: {seconds:.2f}s")
    print(f"entropy map -> {args.out}")
    return EXIT_OK


def cmd_synth(args) -> int:
    t0 = time.perf_counter()
    with _StagedOutput(args.out) as tmp:
        meta = generate_preset(args.preset, tmp, seed=args.seed,
                               texture_res=args.texture_res,
                               image_size=args.image_size,
                               n_views=args.views)
        manifest = RunManifest(
            "synth", {"preset": args.preset, "seed": args.seed, **meta},
            {"total": round(time.perf_counter() - t0, 4)},
            _hash_tree(tmp))
        manifest.write(tmp / "manifest.json")
    print(f"preset {args.preset} -> {args.out}")
    return EXIT_OK


def cmd_merge(args) -> int:
    from .errors import LayoutMismatch

    if len(args.runs) < 2:
        raise ShBrdfError("merge needs at least two run directories")
    maps = []
    for run in args.runs:
        run = Path(run)
        loaded = {}
        for name in TEXTURE_FILES:
            path = run / name
            if not path.exists():
                raise ShBrdfError(f"missing {path}")
            loaded[name] = read_exr(path)
        maps.append(loaded)
    shape = maps[0]["entropy.exr"].shape
    for m in maps[1:]:
        if m["entropy.exr"].shape != shape:
            raise LayoutMismatch("runs have different texture layouts")
    ent = np.stack([m["entropy.exr"][:, :, 0] for m in maps])
    valid = np.stack([m["validity.exr"][:, :, 0] > 0.5 for m in maps])
    # invalid candidates never win the argmin
    choice = np.argmin(np.where(valid, ent, np.inf), axis=0)
    any_valid = valid.any(axis=0)
    t0 = time.perf_counter()
    with _StagedOutput(args.out) as tmp:
        for name in TEXTURE_FILES:
            stack = np.stack([m[name] for m in maps])
            merged = np.take_along_axis(
                stack, choice[None, :, :, None], axis=0)[0]
            if name == "validity.exr":
                merged = any_valid[:, :, None].astype(np.float32)
            write_exr(tmp / name, merged.astype(np.float32))
        manifest = RunManifest(
            "merge", {"runs": [str(r) for r in args.runs]},
            {"total": round(time.perf_counter() - t0, 4)}, _hash_tree(tmp))
        manifest.write(tmp / "manifest.json")
    print(f"merged {len(args.runs)} runs -> {args.out}")
    return EXIT_OK


def _bench_spectra() -> dict:
    rng = np.random.default_rng(0)
    theta, phi = sh.fibonacci_hemisphere(128)
    basis = sh.eval_sh_basis(theta, phi, 8)
    coeffs = rng.normal(size=(81, 1)) * np.exp(
        -0.4 * sh.degree_of_index(8))[:, None]
    vals = basis @ coeffs
    weights = np.cos(theta)
    rows = []
    reg = sh.regularizer_weights(8)
    for lam in (1e-6, 1e-5, 1e-4, 1e-3, 1e-2, 1e-1):
        t0 = time.perf_counter()
        op = sh.solve_operator(basis, weights, lam, 8)
        c = op @ vals
        dt = time.perf_counter() - t0
        resid = float(np.mean((basis @ c - vals) ** 2))
        pnorm = float(np.sqrt(np.sum(reg[:, None] * c ** 2)))
        rows.append({"lambda": lam, "residual_mse": resid,
                     "penalty_norm": pnorm, "seconds": dt})
    return {"rows": rows,
            "penalty_monotone": all(rows[i]["penalty_norm"] >=
                                    rows[i + 1]["penalty_norm"]
                                    for i in range(len(rows) - 1))}


def _bench_entropy(n_texels: int = 256) -> dict:
    from .synth import figure5_cases
    pair = figure5_cases()["dirac"][0]
    lat = []
    for _ in range(n_texels):
        t0 = time.perf_counter()
        spectrum.grid_search(pair)
        lat.append((time.perf_counter() - t0) * 1e3)
    lat = np.array(lat)
    return {"n_texels": n_texels, "cells": 100,
            "median_ms": float(np.median(lat)),
            "p90_ms": float(np.percentile(lat, 90)),
            "histogram_ms": np.histogram(lat, bins=10)[0].tolist()}


def _bench_endtoend() -> dict:
    from .mesh import make_uv_sphere
    from .synth import (environment_suite, orbit_views, parameter_mse,
                        render_views, smooth_parameter_texture)
    geom = make_uv_sphere(32, 16)
    table = build_texel_table(geom, 16)
    tex = smooth_parameter_texture(16, seed=0)
    out = {}
    for name, env in environment_suite(32).items():
        views = orbit_views(20, 3.0, 48, 1.6 * 48)
        images = render_views(geom, table, env, tex, views)
        for v, img in zip(views, images):
            v.image = img
        t0 = time.perf_counter()
        records, _ = fit_scene(env, geom, table, views, OptimizerConfig())
        seconds = time.perf_counter() - t0
        stack, valid = records_to_stack(records, 16)
        out[name] = {"mse": parameter_mse(stack, tex.stack(), valid),
                     "seconds": seconds}
    return out


def cmd_bench(args) -> int:
    suites = {"spectra": _bench_spectra, "entropy": _bench_entropy,
              "endtoend": _bench_endtoend}
    report = {"suite": args.suite, "report": suites[args.suite]()}
    text = json.dumps(report, indent=1, sort_keys=True)
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        tmp = Path(args.out).with_suffix(".tmp")
        tmp.write_text(text)
        os.replace(tmp, args.out)
    print(text)
    return EXIT_OK


def vars_config(cfg: OptimizerConfig) -> dict:
    return {f.name: getattr(cfg, f.name) for f in fields(OptimizerConfig)}


def _add_scene_args(p):
    p.add_argument("--env", required=True, help="lat-long EXR environment")
    p.add_argument("--mesh", required=True, help="OBJ mesh with UVs")
    p.add_argument("--cameras", required=True, help="camera JSON file")
    p.add_argument("--images", required=True,
                   help="directory of view_%%04d.exr images")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--texture-res", type=int, default=DEFAULT_TEXTURE_RES)
    p.add_argument("--config", help="flat key=value config file")
    p.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="config override (repeatable)")
    p.add_argument("--no-prefilter", action="store_true",
                   help="skip environment bandlimit prefiltering")
    p.add_argument("--threads", type=int, default=None,
                   help="cap numeric thread count for stable timings")


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="shbrdf",
        description="SVBRDF recovery from photographs via spherical-"
                    "harmonics power spectra")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="full fit: project, spectra, optimize")
    _add_scene_args(p)
    p.add_argument("--resolution", type=int, default=512,
                   help="exported texture resolution")
    p.add_argument("--spectrum-only", action="store_true",
                   help="export grid-argmax parameters without optimizing")
    p.add_argument("--preview", action="store_true",
                   help="also write an sRGB PNG preview of base color")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("entropy", help="entropy map only (no optimization)")
    _add_scene_args(p)
    p.add_argument("--grid", type=int, default=None,
                   help="total posterior grid cells (square grid)")
    p.set_defaults(func=cmd_entropy)

    p = sub.add_parser("synth", help="generate a synthetic benchmark bundle")
    p.add_argument("--preset", required=True, choices=PRESETS)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--texture-res", type=int, default=32)
    p.add_argument("--image-size", type=int, default=96)
    p.add_argument("--views", type=int, default=100)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("merge", help="argmin-entropy merge of fit runs")
    p.add_argument("--runs", nargs="+", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_merge)

    p = sub.add_parser("bench", help="timing and accuracy report")
    p.add_argument("--suite", required=True,
                   choices=("spectra", "entropy", "endtoend"))
    p.add_argument("--out", help="write the JSON report here")
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    _set_threads(getattr(args, "threads", None))
    try:
        return args.func(args)
    except (OSError, ValueError, KeyError, json.JSONDecodeError,
            ShBrdfError) as exc:
        from .errors import NonFiniteLoss, SingularSystem
        if isinstance(exc, (NonFiniteLoss, SingularSystem)):
            print(f"numerical failure: {exc}", file=sys.stderr)
            return EXIT_NUMERIC
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except np.linalg.LinAlgError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
