import numpy as np
import pytest

from shbrdf import scene, sh
from shbrdf.errors import NonHdrInput
from shbrdf.exr import read_exr, write_exr
from shbrdf.mesh import build_texel_table, make_uv_sphere
from shbrdf.synth import blob_environment, orbit_views


def test_exr_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    image = rng.random((17, 23, 3)).astype(np.float32) * 100.0
    path = tmp_path / "img.exr"
    write_exr(path, image)
    np.testing.assert_array_equal(read_exr(path), image)


def test_load_environment_rejects_ldr(tmp_path):
    path = tmp_path / "env.png"
    path.write_bytes(b"not an hdr image")
    with pytest.raises(NonHdrInput):
        scene.load_environment(path)


def test_environment_shape_validation():
    with pytest.raises(ValueError):
        scene.EnvironmentMap(np.ones((8, 8, 3)))
    with pytest.raises(ValueError):
        scene.EnvironmentMap(np.full((8, 16, 3), np.nan))


def test_constant_environment_lookup():
    env = scene.EnvironmentMap(np.full((8, 16, 3), 2.5))
    rng = np.random.default_rng(1)
    theta = rng.uniform(0, np.pi, 40)
    phi = rng.uniform(0, 2 * np.pi, 40)
    np.testing.assert_allclose(env.lookup(theta, phi), 2.5)


def test_environment_expansion_round_trip():
    # a smooth environment survives the SH round trip
    env = blob_environment([((0.0, 0.0, 1.0), 2.0, (1.0, 0.8, 0.6))],
                           height=32, ambient=0.3)
    back = scene.EnvironmentMap.from_expansion(env.to_expansion(8),
                                               height=32)
    rel = np.abs(back.data - env.data) / (env.data.max())
    assert rel.mean() < 0.02


def test_hemisphere_quadrature_constant():
    # uniform radiance integrated over the hemisphere gives 2*pi
    env = scene.EnvironmentMap(np.ones((8, 16, 3)))
    samples = scene.sample_incoming(env, np.eye(3), 2000)
    total = (2 * np.pi / len(samples)) * samples.values.sum(axis=0)
    np.testing.assert_allclose(total, 2 * np.pi, rtol=0.02)


def test_camera_round_trip(tmp_path):
    views = orbit_views(5, 3.0, 64, 100.0)
    path = tmp_path / "cameras.json"
    scene.save_cameras(path, views)
    loaded = scene.load_cameras(path)
    assert len(loaded) == 5
    for a, b in zip(views, loaded):
        assert (a.fx, a.fy, a.cx, a.cy) == (b.fx, b.fy, b.cx, b.cy)
        np.testing.assert_array_equal(a.extrinsics, b.extrinsics)


def test_camera_projection_center():
    views = orbit_views(3, 3.0, 64, 100.0)
    for view in views:
        pixels, ok = view.project(np.zeros((1, 3)))
        assert ok[0]
        np.testing.assert_allclose(pixels[0], [view.cx, view.cy], atol=1e-9)


def test_camera_rejects_bad_rotation():
    ext = np.eye(4)
    ext[0, 0] = 2.0
    with pytest.raises(ValueError):
        scene.CameraView(100, 100, 32, 32, 64, 64, ext)


@pytest.fixture(scope="module")
def small_scene():
    geom = make_uv_sphere(24, 12)
    table = build_texel_table(geom, 12)
    return geom, table


def test_projection_recovers_exact_radiance(small_scene):
    # paint every image with a constant; observed radiance must match it
    geom, table = small_scene
    views = orbit_views(6, 3.0, 48, 1.6 * 48)
    for k, view in enumerate(views):
        view.image = np.full((48, 48, 3), float(k + 1))
    obs = scene.project_observations(views, geom, table)
    seen = [o for o in obs if o is not None]
    assert len(seen) > 0.5 * len(obs)
    for o in seen:
        # each sample's value matches one of the per-view constants exactly
        assert np.all(np.isin(np.round(o.values[:, 0], 9), np.arange(1.0, 7.0)))
        assert np.all((o.weights > 0) & (o.weights <= 1))
        assert np.all(o.theta < np.pi / 2)


def test_occluded_texels_have_no_observations(small_scene):
    geom, table = small_scene
    views = orbit_views(1, 3.0, 48, 1.6 * 48)
    views[0].image = np.ones((48, 48, 3))
    obs = scene.project_observations(views, geom, table)
    # a single view cannot see the far side of the sphere
    assert sum(o is None for o in obs) > 0.2 * len(obs)


def test_texel_records_layout(small_scene):
    geom, table = small_scene
    env = scene.EnvironmentMap(np.ones((8, 16, 3)))
    views = orbit_views(4, 3.0, 48, 1.6 * 48)
    for view in views:
        view.image = np.ones((48, 48, 3))
    obs = scene.project_observations(views, geom, table)
    records = scene.build_texel_records(env, table, obs, 8)
    assert len(records) == len(table.texel_indices)
    for rec, (i, j) in zip(records, table.texel_indices):
        assert rec.uv == (i, j)
        assert len(rec.light) == 4 * sh.num_coeffs(8)
        if rec.valid:
            assert rec.reflected is not None
            assert len(rec.reflected) == len(rec.samples)


def test_export_import_textures(tmp_path, small_scene):
    from shbrdf.brdf import PrincipledParams
    from shbrdf.optimize import TexelRecord

    rng = np.random.default_rng(3)
    records = []
    for i in range(12):
        for j in range(12):
            empty = sh.DirectionalSamples(np.zeros(0), np.zeros(0),
                                          np.zeros((0, 3)))
            records.append(TexelRecord(
                (i, j), empty, empty,
                params=PrincipledParams(rng.random(3), float(rng.random()),
                                        float(rng.random())),
                entropy=float(rng.random()), valid=(i + j) % 7 != 0))
    scene.export_textures(records, tmp_path, resolution=24)
    maps = scene.import_textures(tmp_path)
    assert maps["base_color"].shape == (24, 24, 3)
    valid = maps["validity"]
    assert valid.any() and not valid.all()
    assert np.all((maps["entropy"] >= 0) & (maps["entropy"] <= 1))
    assert np.isfinite(maps["roughness"]).all()
