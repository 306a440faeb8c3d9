import numpy as np
import pytest

from shbrdf import sh, synth
from shbrdf.mesh import build_texel_table, make_uv_sphere


def test_blob_environment_valid():
    env = synth.blob_environment([((0, 0, 1), 50.0, (1, 1, 1))], height=16)
    assert env.data.shape == (16, 32, 3)
    assert np.isfinite(env.data).all() and (env.data >= 0).all()


def test_environment_suite_ordering():
    envs = synth.environment_suite(32)
    assert set(envs) == {"env-sharp", "env-mid", "env-broad", "env-smooth"}
    # sharper environments concentrate more energy per pixel
    peaks = {k: v.data.max() for k, v in envs.items()}
    assert peaks["env-sharp"] > peaks["env-mid"] > peaks["env-broad"] \
        > peaks["env-smooth"]


def test_smooth_parameter_texture_bounds():
    tex = synth.smooth_parameter_texture(16, seed=0, roughness_min=0.4)
    assert tex.stack().shape == (16, 16, 5)
    assert tex.roughness.min() >= 0.4
    assert tex.metallic.max() <= 0.8
    p = tex.at(3, 5)
    np.testing.assert_allclose(p.base_color, tex.base_color[3, 5])


def test_orbit_views_aim_at_origin():
    views = synth.orbit_views(8, 3.0, 64, 100.0)
    for view in views:
        np.testing.assert_allclose(np.linalg.norm(view.center), 3.0,
                                   atol=1e-9)
        forward = view.rotation[:, 2]
        np.testing.assert_allclose(forward, -view.center / 3.0, atol=1e-9)


def test_figure_samples_layout():
    outgoing, incoming, light = synth.figure_samples()
    assert len(outgoing) == 88
    assert len(incoming) == 88
    np.testing.assert_array_equal(outgoing.theta, incoming.theta)
    np.testing.assert_allclose(outgoing.weights, np.cos(outgoing.theta))
    assert light.max_degree == 8


def test_parameter_mse():
    a = np.zeros((4, 4, 5))
    b = np.ones((4, 4, 5))
    valid = np.zeros((4, 4), dtype=bool)
    valid[0, 0] = True
    assert synth.parameter_mse(a, b, valid) == 1.0


@pytest.fixture(scope="module")
def render_setup():
    geom = make_uv_sphere(24, 12)
    table = build_texel_table(geom, 12)
    env = synth.environment_suite(32)["env-mid"]
    tex = synth.smooth_parameter_texture(12, seed=0)
    views = synth.orbit_views(3, 3.0, 48, 1.6 * 48)
    return geom, table, env, tex, views


def test_render_modes_agree(render_setup):
    geom, table, env, tex, views = render_setup
    conv = synth.render_views(geom, table, env, tex, views,
                              "convolution-model")
    quad = synth.render_views(geom, table, env, tex, views, "quadrature")
    for a, b in zip(conv, quad):
        assert a.shape == b.shape == (48, 48, 3)
        assert np.isfinite(a).all() and np.isfinite(b).all()
        assert (a >= 0).all() and (b >= 0).all()
        # same model rendered two ways: overall brightness must agree
        assert abs(a.mean() - b.mean()) < 0.15 * max(a.mean(), 1e-9)


def test_render_background_empty(render_setup):
    geom, table, env, tex, views = render_setup
    image = synth.render_views(geom, table, env, tex, views[:1])[0]
    corner = image[:2, :2]
    np.testing.assert_allclose(corner, 0.0)


def test_generate_preset_figure3(tmp_path):
    meta = synth.generate_preset("figure3", tmp_path)
    data = np.load(tmp_path / "samples.npz")
    assert data["theta"].shape == (88,)
    assert data["values"].shape[0] == 88
    assert meta["alpha"] == 0.2


def test_generate_preset_rejects_unknown(tmp_path):
    with pytest.raises(ValueError):
        synth.generate_preset("nope", tmp_path)


def test_save_bundle_layout(tmp_path, render_setup):
    geom, table, env, tex, views = render_setup
    images = synth.render_views(geom, table, env, tex, views)
    for v, img in zip(views, images):
        v.image = img
    synth.save_bundle(tmp_path, geom, env, views, images, table, tex,
                      {"n_views": len(views)})
    for name in ("mesh.obj", "env.exr", "cameras.json", "truth.json"):
        assert (tmp_path / name).exists()
    assert len(list((tmp_path / "images").glob("view_*.exr"))) == len(views)
    assert (tmp_path / "gt" / "roughness.exr").exists()
