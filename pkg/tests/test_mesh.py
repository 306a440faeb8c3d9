import numpy as np
import pytest

from shbrdf import mesh


def unit_square():
    vertices = np.array([[0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0]],
                        dtype=np.float64)
    uvs = np.array([[0, 0], [1, 0], [1, 1], [0, 1]], dtype=np.float64)
    normals = np.tile([0.0, 0.0, 1.0], (4, 1))
    faces = np.array([[0, 1, 2], [0, 2, 3]])
    return mesh.SurfaceGeometry(vertices, normals, uvs,
                                faces, faces.copy(), faces.copy())


def test_obj_round_trip(tmp_path):
    geom = unit_square()
    path = tmp_path / "square.obj"
    mesh.save_obj(path, geom)
    loaded = mesh.load_obj(path)
    np.testing.assert_allclose(loaded.vertices, geom.vertices, atol=1e-8)
    np.testing.assert_allclose(loaded.uvs, geom.uvs, atol=1e-8)
    np.testing.assert_allclose(loaded.normals, geom.normals, atol=1e-8)
    np.testing.assert_array_equal(loaded.faces_v, geom.faces_v)


def test_texel_table_covers_square_exactly():
    geom = unit_square()
    table = mesh.build_texel_table(geom, 8)
    assert table.valid.sum() == 64
    # texel centers interpolate to the matching plane positions
    for i, j in table.texel_indices[:10]:
        u = (j + 0.5) / 8
        v = (i + 0.5) / 8
        np.testing.assert_allclose(table.position[i, j], [u, v, 0.0],
                                   atol=1e-12)
        np.testing.assert_allclose(table.normal[i, j], [0.0, 0.0, 1.0])


def test_sphere_geometry():
    geom = mesh.make_uv_sphere(32, 16)
    norms = np.linalg.norm(geom.vertices, axis=1)
    np.testing.assert_allclose(norms, 1.0, atol=1e-12)
    np.testing.assert_allclose(geom.normals, geom.vertices, atol=1e-12)
    assert np.all(geom.uvs >= 0) and np.all(geom.uvs <= 1)


def test_sphere_table_coverage():
    geom = mesh.make_uv_sphere(48, 24)
    table = mesh.build_texel_table(geom, 24)
    # everything except the degenerate pole rows is rasterized
    assert table.valid[1:-1].all()
    pos = table.position[table.valid]
    np.testing.assert_allclose(np.linalg.norm(pos, axis=1), 1.0, atol=2e-2)


def test_tangent_frames_orthonormal():
    rng = np.random.default_rng(0)
    normals = rng.normal(size=(50, 3))
    normals /= np.linalg.norm(normals, axis=1, keepdims=True)
    frames = mesh.tangent_frame(normals)
    for frame, n in zip(frames, normals):
        np.testing.assert_allclose(frame.T @ frame, np.eye(3), atol=1e-12)
        np.testing.assert_allclose(frame[:, 2], n, atol=1e-12)
        assert np.linalg.det(frame) == pytest.approx(1.0)
