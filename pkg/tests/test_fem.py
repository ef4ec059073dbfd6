import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.sparse.linalg import eigsh

from pmev.errors import NonPositiveArea
from pmev.exact import BpParams, bp_value
from pmev.fem import MeshTrajectory, PressureSystem, assemble_mass, assemble_rhs, basis_gradients, step_physical
from pmev.mesh import TriangleMesh
from pmev.meshgen import disk_mesh
from pmev.quadrature import DEG4

from conftest import structured_square


def unit_triangle():
    return TriangleMesh.from_arrays([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]], [[0, 1, 2]])


def test_local_mass_entries():
    mesh = unit_triangle()
    B = assemble_mass(mesh, interior_only=False).toarray()
    area = 0.5
    np.testing.assert_allclose(np.diag(B), area / 6)  # 2|K|/12
    np.testing.assert_allclose(B[0, 1], area / 12)
    assert B[0, 0] == pytest.approx(1 / 12)
    assert B[0, 1] == pytest.approx(1 / 24)


def test_mass_row_sums_equal_patch_area_third(disk):
    B = assemble_mass(disk, interior_only=False)
    rows = np.asarray(B.sum(axis=1)).ravel()
    expected = np.bincount(disk.triangles.ravel(), weights=np.repeat(disk.signed_areas() / 3, 3))
    np.testing.assert_allclose(rows, expected, rtol=1e-13)
    assert rows.sum() == pytest.approx(disk.signed_areas().sum())


def test_interior_mass_is_spd(disk):
    B = assemble_mass(disk)
    assert abs(B - B.T).max() == 0
    lo = eigsh(B, k=1, which="SA", return_eigenvectors=False)[0]
    assert lo > 0


def test_basis_gradients_partition_of_unity(disk):
    area, grads = basis_gradients(disk.vertices, disk.triangles)
    np.testing.assert_allclose(grads.sum(axis=1), 0.0, atol=1e-10)
    np.testing.assert_allclose(area, disk.signed_areas())
    with pytest.raises(NonPositiveArea):
        basis_gradients(disk.vertices[:, ::-1].copy(), disk.triangles)


def quadrature_rhs(traj, t, v, m):
    """Brute-force oracle: every integral by the 6-point rule, element by element."""
    x = traj.vertices_at(t)
    xdot = traj.velocity
    bary, w = DEG4
    F = np.zeros(len(x))
    for tri in traj.start.triangles:
        xe = x[tri]
        E = np.column_stack([xe[1] - xe[0], xe[2] - xe[0]])
        area = 0.5 * np.linalg.det(E)
        G = np.linalg.inv(E).T @ np.array([[-1.0, 1.0, 0.0], [-1.0, 0.0, 1.0]])  # columns: grad phi_a
        g = G @ v[tri]
        for lam, wq in zip(bary, w):
            vq = lam @ v[tri]
            Xq = lam @ xdot[tri]
            for a in range(3):
                val = g @ (Xq * lam[a] - m * vq * G[:, a]) + (1 - m) * (g @ g) * lam[a]
                F[tri[a]] += area * wq * val
    return F


@pytest.mark.parametrize("m", [2.0, 5.0])
def test_rhs_matches_quadrature_oracle(m):
    rng = np.random.default_rng(1)
    start = structured_square(3, jitter=0.3, seed=2)
    end = start.with_vertices(start.vertices + 0.02 * rng.normal(size=start.vertices.shape))
    traj = MeshTrajectory(start, end, 0.0, 0.1)
    v = rng.uniform(0, 1, start.n_vertices)
    t = 0.037
    F = assemble_rhs(v, traj, t, m, all_vertices=True)
    np.testing.assert_allclose(F, quadrature_rhs(traj, t, v, m), rtol=1e-12, atol=1e-13)


def test_jacobian_matches_finite_differences():
    rng = np.random.default_rng(4)
    start = structured_square(3, jitter=0.3, seed=5)
    end = start.with_vertices(start.vertices + 0.02 * rng.normal(size=start.vertices.shape))
    system = PressureSystem(MeshTrajectory(start, end, 0.0, 1.0), 3.0)
    V = rng.uniform(0, 1, start.n_interior)
    J = system.jacobian(0.4, V).toarray()
    h = 1e-7
    fd = np.column_stack(
        [(system.rhs(0.4, V + h * e) - system.rhs(0.4, V - h * e)) / (2 * h) for e in np.eye(len(V))]
    )
    np.testing.assert_allclose(J, fd, atol=1e-6 * np.abs(fd).max())


def test_trajectory_interpolates():
    start = structured_square(2)
    end = start.with_vertices(start.vertices * 1.2)
    traj = MeshTrajectory(start, end, 1.0, 3.0)
    np.testing.assert_allclose(traj.vertices_at(2.0), start.vertices * 1.1)
    np.testing.assert_allclose(traj.velocity, start.vertices * 0.1)
    with pytest.raises(ValueError):
        MeshTrajectory(start, disk_mesh(0.5, 2), 0.0, 1.0)
    with pytest.raises(ValueError):
        MeshTrajectory(start, end, 1.0, 1.0)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 1000), m=st.floats(1.0, 10.0))
def test_rhs_of_constant_on_static_mesh_vanishes(seed, m):
    # a constant v has no gradient, so every term of F vanishes
    mesh = structured_square(3, jitter=0.3, seed=seed)
    traj = MeshTrajectory.static(mesh, 0.0, 1.0)
    F = assemble_rhs(np.full(mesh.n_vertices, 0.7), traj, 0.5, m)
    np.testing.assert_allclose(F, 0.0, atol=1e-13)


def test_step_on_exact_moving_mesh_tracks_bp():
    # scale a disk mesh with the exact boundary: the FE step should follow BP closely
    p = BpParams(m=2.0)
    t0, t1 = p.t0, p.t0 + 2e-3
    base = disk_mesh(0.5, 12)
    start = base.with_vertices(base.vertices * p.lam(t0))
    end = base.with_vertices(base.vertices * p.lam(t1))
    v0 = bp_value(start.vertices, t0, p)
    v1, stats = step_physical(v0, MeshTrajectory(start, end, t0, t1), 2.0)
    exact = bp_value(end.vertices, t1, p)
    assert np.max(np.abs(v1 - exact)) < 5e-3
    assert np.all(v1[end.n_interior :] == 0)
    assert stats.steps >= 1
