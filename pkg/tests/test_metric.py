import logging

import numpy as np
import pytest

from pmev.meshgen import disk_mesh
from pmev.metric import build_metric, equidistribution_cv, metric_density, sigma_h

from conftest import structured_square


def test_density_values():
    assert metric_density(0.0, 1e-4) == pytest.approx(100.0)
    assert metric_density(3.0, 16.0) == pytest.approx(0.2)


def test_element_scale_is_vertex_mean():
    mesh = structured_square(2)
    v = np.linspace(0, 1, mesh.n_vertices)
    M = build_metric(mesh, v)
    c = 1 / np.sqrt(v**2 + 1e-5)
    np.testing.assert_allclose(M.scale, c[mesh.triangles].mean(axis=1))
    np.testing.assert_allclose(M.vertex_scale, c)
    np.testing.assert_allclose(M.tensors[:, 0, 1], 0.0)
    np.testing.assert_allclose(M.tensors[:, 0, 0], M.scale)


def test_metric_is_largest_where_v_vanishes(disk):
    r = np.linalg.norm(disk.vertices, axis=1)
    M = build_metric(disk, 0.5 * (1 - (r / 0.5) ** 2).clip(0))
    bnd_elem = np.any(disk.triangles >= disk.n_interior, axis=1)
    assert M.scale[bnd_elem].mean() > 5 * M.scale[~bnd_elem].mean()


def test_scaled_metric():
    mesh = structured_square(2)
    M = build_metric(mesh, np.ones(mesh.n_vertices))
    M2 = M.scaled(10.0)
    np.testing.assert_allclose(M2.scale, 10 * M.scale)
    assert sigma_h(mesh, M2) == pytest.approx(10 * sigma_h(mesh, M))


def test_uniform_metric_on_uniform_mesh_is_equidistributed():
    mesh = structured_square(4)
    M = build_metric(mesh, np.full(mesh.n_vertices, 0.3))
    assert equidistribution_cv(mesh, M) < 1e-12
    assert sigma_h(mesh, M) == pytest.approx(metric_density(0.3))


def test_bad_inputs(caplog):
    mesh = disk_mesh(0.5, 2)
    with pytest.raises(ValueError):
        build_metric(mesh, np.zeros(3))
    with pytest.raises(ValueError):
        build_metric(mesh, np.zeros(mesh.n_vertices), floor=0.0)
    with caplog.at_level(logging.WARNING):
        build_metric(mesh, np.zeros(mesh.n_vertices), floor=0.5)
    assert "outside" in caplog.text
