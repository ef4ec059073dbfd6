import numpy as np
import pytest

from pmev.errors import GenerationFailure
from pmev.exact import in_complex_support
from pmev.mesh import loop_polygon_area
from pmev.meshgen import disk_mesh, donut_mesh_for, make_initial_mesh


def min_angle(mesh):
    x = mesh.vertices[mesh.triangles]
    out = []
    for a in range(3):
        u = x[:, (a + 1) % 3] - x[:, a]
        w = x[:, (a + 2) % 3] - x[:, a]
        cos = np.einsum("ij,ij->i", u, w) / np.linalg.norm(u, axis=1) / np.linalg.norm(w, axis=1)
        out.append(np.degrees(np.arccos(np.clip(cos, -1, 1))))
    return np.min(out)


@pytest.mark.parametrize("n", [1, 3, 8])
def test_disk_mesh_counts_and_radius(n):
    mesh = disk_mesh(0.5, n)
    assert mesh.n_elements == 6 * n * n
    rb = np.linalg.norm(mesh.vertices[mesh.n_interior :], axis=1)
    np.testing.assert_allclose(rb, 0.5, rtol=1e-15)
    assert len(mesh.boundary_loops) == 1
    assert mesh.signed_areas().min() > 0


@pytest.mark.parametrize("example,target", [("bp", 500), ("bp", 2000), ("waiting", 1000), ("complex", 500)])
def test_initial_mesh_size_and_quality(example, target):
    mesh = make_initial_mesh(example, target)
    assert 0.85 * target <= mesh.n_elements <= 1.15 * target
    assert min_angle(mesh) > 25
    assert len(mesh.boundary_loops) == 1


def test_donut_mesh_fits_support():
    mesh = donut_mesh_for(800)
    assert np.all(in_complex_support(mesh.vertices, tol=1e-9))
    area = 0.75 * np.pi * (1 - 0.25) + np.pi * 0.25**2
    assert loop_polygon_area(mesh) == pytest.approx(area, rel=0.02)


def test_generation_errors():
    with pytest.raises(GenerationFailure):
        make_initial_mesh("bp", 10)
    with pytest.raises(GenerationFailure):
        make_initial_mesh("square", 100)


def test_disk_512_target_window():
    mesh = make_initial_mesh("bp", 512)
    assert 410 <= mesh.n_elements <= 614
    rb = np.linalg.norm(mesh.vertices[mesh.n_interior :], axis=1)
    assert np.max(np.abs(rb - 0.5)) <= 1e-12


def test_smoke_floor_mesh():
    mesh = make_initial_mesh("bp", 16)
    assert mesh.n_elements >= 16 and mesh.signed_areas().min() > 0
