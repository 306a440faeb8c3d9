import pytest

from shbrdf.mesh import build_texel_table, make_uv_sphere
from shbrdf.synth import environment_suite, orbit_views, render_views

TEX_RES = 24
IMAGE_SIZE = 64


@pytest.fixture(scope="session")
def sphere_scene():
    """UV sphere plus its texel table at the shared benchmark resolution."""
    geom = make_uv_sphere(48, 24)
    table = build_texel_table(geom, TEX_RES)
    return geom, table


@pytest.fixture(scope="session")
def env_suite():
    return environment_suite(64)


def render_scene(geom, table, env, texture, n_views,
                 image_size=IMAGE_SIZE, mode="convolution-model"):
    """Render an orbit of views and attach the images to the cameras."""
    views = orbit_views(n_views, 3.0, image_size, 1.6 * image_size)
    images = render_views(geom, table, env, texture, views, mode)
    for view, image in zip(views, images):
        view.image = image
    return views
