import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pmev.boundary import (
    RECOVERY,
    apply_boundary,
    check_boundary,
    darcy_step,
    ppr_gradients,
    recover_gradient,
    recovered_gradients,
    write_boundary_csv,
)
from pmev.errors import BoundaryCollision
from pmev.exact import BpParams, bp_value, ic_waiting
from pmev.mesh import TriangleMesh, boundary_normals, loop_polygon_area
from pmev.meshgen import disk_mesh

from conftest import structured_square

BP2 = BpParams(m=2.0, r0=0.5)


@settings(max_examples=30, deadline=None)
@given(a=st.floats(-5, 5), b=st.floats(-5, 5), c=st.floats(-5, 5))
def test_linear_reproduction(a, b, c):
    mesh = _JITTERED
    v = a + mesh.vertices @ np.array([b, c])
    g = recovered_gradients(mesh, v)
    np.testing.assert_allclose(g, np.broadcast_to([b, c], g.shape), atol=1e-10 * (1 + abs(b) + abs(c)))


_JITTERED = structured_square(5, jitter=0.3)


def test_zero_field():
    mesh = disk_mesh(0.5, 3)
    v = np.zeros(mesh.n_vertices)
    assert np.all(recover_gradient(mesh, v, mesh.n_interior) == 0)
    state = darcy_step(mesh, v, 1e-3)
    np.testing.assert_array_equal(state.positions, mesh.vertices[mesh.n_interior :])


def test_single_vertex_arithmetic():
    # right edge of a square: normal (1, 0); v = -a x + const gives gradient (-a, 0)
    mesh = structured_square(4)
    a, dt = 0.7, 0.01
    v = 3.0 - a * mesh.vertices[:, 0]
    state = darcy_step(mesh, v, dt)
    x = mesh.vertices[mesh.n_interior :]
    on_right = np.flatnonzero((x[:, 0] == 1.0) & (x[:, 1] > 0) & (x[:, 1] < 1))
    for i in on_right:
        np.testing.assert_allclose(state.positions[i], [1.0 + a * dt, x[i, 1]], atol=1e-14)
        assert state.speeds[i] == pytest.approx(a)


def test_motion_is_normal_and_area_grows():
    mesh = disk_mesh(0.5, 6)
    v = bp_value(mesh.vertices, BP2.t0, BP2)
    state = darcy_step(mesh, v, 1e-3)
    d = state.positions - mesh.vertices[mesh.n_interior :]
    cross = d[:, 0] * state.normals[:, 1] - d[:, 1] * state.normals[:, 0]
    np.testing.assert_allclose(cross, 0.0, atol=1e-15)
    assert np.all(state.speeds > 0)
    moved = apply_boundary(mesh, state)
    assert loop_polygon_area(moved) > loop_polygon_area(mesh)
    np.testing.assert_array_equal(moved.vertices[: mesh.n_interior], mesh.vertices[: mesh.n_interior])


def test_bp_boundary_speed_converges_to_two():
    # exact speed r0 lam'(t0) = 2 for m = 2, r0 = 0.5; recovery is first order at the boundary
    errs = []
    for n in (4, 8, 16, 32):
        mesh = disk_mesh(0.5, n)
        v = bp_value(mesh.vertices, BP2.t0, BP2)
        s = darcy_step(mesh, v, 1e-4).speeds
        errs.append(np.max(np.abs(s - 2.0)))
    assert errs[-1] < 0.1
    assert all(e1 < e0 for e0, e1 in zip(errs, errs[1:]))


def test_bp_recovered_radial_derivative():
    mesh = disk_mesh(0.5, 32)
    v = bp_value(mesh.vertices, BP2.t0, BP2)
    g = recovered_gradients(mesh, v, mesh.boundary_vertices)
    x = mesh.vertices[mesh.boundary_vertices]
    dr = np.einsum("ij,ij->i", g, x / np.linalg.norm(x, axis=1)[:, None])
    assert np.mean(dr) == pytest.approx(-2.0, rel=0.05)


def test_waiting_ic_boundary_barely_moves():
    speeds = []
    for n in (8, 16):
        mesh = disk_mesh(np.pi / 2, n)
        v = ic_waiting(mesh.vertices)
        speeds.append(np.max(np.abs(darcy_step(mesh, v, 1e-3).speeds)))
    # recovered normal derivative is O(h): halves under refinement
    assert speeds[1] < 0.6 * speeds[0]
    assert speeds[1] < 0.1


def test_collision_detection():
    mesh = disk_mesh(0.5, 3)
    pos = mesh.vertices[mesh.n_interior :].copy()
    check_boundary(mesh, pos)
    pos[0], pos[len(pos) // 2] = pos[len(pos) // 2].copy(), pos[0].copy()
    with pytest.raises(BoundaryCollision):
        check_boundary(mesh, pos)


def test_two_loops_touching():
    # annulus-like mesh with two loops; pushing the inner loop out makes them intersect
    phi = 2 * np.pi * np.arange(12) / 12
    inner = 0.5 * np.column_stack([np.cos(phi), np.sin(phi)])
    outer = np.column_stack([np.cos(phi), np.sin(phi)])
    x = np.vstack([inner, outer])
    tri = []
    for i in range(12):
        j = (i + 1) % 12
        tri += [[i, 12 + i, 12 + j], [i, 12 + j, j]]
    mesh = TriangleMesh.from_arrays(x, tri)
    assert len(mesh.boundary_loops) == 2
    pos = mesh.vertices[mesh.n_interior :].copy()
    check_boundary(mesh, pos)
    first = mesh.boundary_loops[0] - mesh.n_interior
    second = mesh.boundary_loops[1] - mesh.n_interior
    small = first if np.linalg.norm(pos[first[0]]) < 0.75 else second
    pos[small] += [0.7, 0.0]
    with pytest.raises(BoundaryCollision):
        check_boundary(mesh, pos)


def test_darcy_step_rejects_bad_dt():
    mesh = disk_mesh(0.5, 2)
    with pytest.raises(ValueError):
        darcy_step(mesh, np.zeros(mesh.n_vertices), 0.0)


def test_boundary_csv(tmp_path):
    path = tmp_path / "b.csv"
    write_boundary_csv(path, [(0.1, 3, 0.5, 0.25, 2.0)])
    lines = path.read_text().splitlines()
    assert lines[0] == "t,vertex_id,x,y,speed"
    assert lines[1].split(",")[1] == "3"


@settings(max_examples=30, deadline=None)
@given(c=st.lists(st.floats(-3, 3), min_size=6, max_size=6))
def test_ppr_reproduces_quadratics(c):
    mesh = _JITTERED
    x, y = mesh.vertices.T
    v = c[0] + c[1] * x + c[2] * y + c[3] * x * x + c[4] * x * y + c[5] * y * y
    g = ppr_gradients(mesh, v)
    exact = np.column_stack([c[1] + 2 * c[3] * x + c[4] * y, c[2] + c[4] * x + 2 * c[5] * y])
    np.testing.assert_allclose(g, exact, atol=1e-9 * (1 + np.abs(c).sum()))


def _boundary_radial_error(method, n):
    mesh = disk_mesh(0.5, n)
    v = bp_value(mesh.vertices, BP2.t0, BP2)
    b = mesh.boundary_vertices
    dn = np.einsum("ij,ij->i", RECOVERY[method](mesh, v, b), boundary_normals(mesh))
    return np.max(np.abs(dn + 2.0)) / 2.0


def test_boundary_recovery_orders():
    # The BP pressure is quadratic in x: the patch average is only first-order on
    # one-sided boundary patches, the quadratic fit is exact.
    avg = [_boundary_radial_error("average", n) for n in (8, 16, 32)]
    rates = np.log2(np.array(avg[:-1]) / np.array(avg[1:]))
    assert np.all(np.abs(rates - 1.0) < 0.15)
    assert max(_boundary_radial_error("ppr", n) for n in (8, 16)) < 1e-12


def test_recover_gradient_methods_agree_on_linears():
    mesh = _JITTERED
    v = 1.0 + mesh.vertices @ np.array([2.0, -3.0])
    for method in ("average", "ppr"):
        np.testing.assert_allclose(recover_gradient(mesh, v, 0, method), [2.0, -3.0], atol=1e-10)


def test_darcy_step_rejects_unknown_recovery():
    mesh = disk_mesh(0.5, 4)
    with pytest.raises(ValueError, match="recovery"):
        darcy_step(mesh, np.zeros(mesh.n_vertices), 1e-3, recovery="spr")
