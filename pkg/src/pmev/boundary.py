"""Free-boundary propagation by Darcy's law with an explicit Euler step."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
import shapely

from .errors import BoundaryCollision
from .mesh import TriangleMesh, boundary_normals


@dataclass
class BoundaryState:
    positions: np.ndarray  # (N_b, 2), boundary vertices in index order
    normals: np.ndarray  # (N_b, 2), outward unit normals at the old positions
    speeds: np.ndarray  # (N_b,), normal speed -grad v . n


def element_gradients(mesh: TriangleMesh, v):
    """Constant gradient of the P1 interpolant on each element, shape ``(N, 2)``."""
    x = mesh.vertices[mesh.triangles]
    vv = np.asarray(v)[mesh.triangles]
    e1 = x[:, 1] - x[:, 0]
    e2 = x[:, 2] - x[:, 0]
    det = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
    d1 = vv[:, 1] - vv[:, 0]
    d2 = vv[:, 2] - vv[:, 0]
    gx = (d1 * e2[:, 1] - d2 * e1[:, 1]) / det
    gy = (d2 * e1[:, 0] - d1 * e2[:, 0]) / det
    return np.column_stack([gx, gy])


def recovered_gradients(mesh: TriangleMesh, v, vertices=None):
    """Area-weighted patch average of element gradients at the given vertices."""
    g = element_gradients(mesh, v)
    w = mesh.signed_areas()
    tri = mesh.triangles.ravel()
    wg = np.repeat(w[:, None] * g, 3, axis=0)
    n = mesh.n_vertices
    num = np.column_stack(
        [np.bincount(tri, weights=wg[:, 0], minlength=n), np.bincount(tri, weights=wg[:, 1], minlength=n)]
    )
    den = np.bincount(tri, weights=np.repeat(w, 3), minlength=n)
    out = num / den[:, None]
    return out if vertices is None else out[vertices]


def ppr_gradients(mesh: TriangleMesh, v, vertices=None):
    """Polynomial-preserving recovery: gradient of a local least-squares quadratic.

    For each vertex a quadratic is fitted to the nodal values on its two-ring
    (in coordinates scaled by the patch radius) and differentiated at the
    vertex.  The fit reproduces quadratics exactly, so on a one-sided boundary
    patch the recovered gradient is second-order accurate, whereas the patch
    average of element gradients is only first-order there (it samples the
    gradient near the patch centroid, a fraction of ``h`` inside).  Vertices
    whose two-ring cannot determine a quadratic fall back to the average.
    """
    vertices = np.arange(mesh.n_vertices) if vertices is None else np.asarray(vertices)
    v = np.asarray(v, dtype=float)
    A = mesh.vertex_adjacency()
    ring2 = (A @ A).tocsr()
    out = np.empty((len(vertices), 2))
    fallback = []
    for row, i in enumerate(vertices):
        nbr = ring2.indices[ring2.indptr[i] : ring2.indptr[i + 1]]
        d = mesh.vertices[nbr] - mesh.vertices[i]
        scale = np.max(np.abs(d))
        if len(nbr) < 6 or scale == 0:
            fallback.append(row)
            continue
        s = d / scale
        V = np.column_stack([np.ones(len(s)), s[:, 0], s[:, 1], s[:, 0] ** 2, s[:, 0] * s[:, 1], s[:, 1] ** 2])
        coef, _, rank, _ = np.linalg.lstsq(V, v[nbr], rcond=None)
        if rank < 6:
            fallback.append(row)
            continue
        out[row] = coef[1:3] / scale
    if fallback:
        out[fallback] = recovered_gradients(mesh, v, vertices[fallback])
    return out


RECOVERY = {"ppr": ppr_gradients, "average": recovered_gradients}


def recover_gradient(mesh: TriangleMesh, v, i: int, method="average"):
    return RECOVERY[method](mesh, v, np.array([i]))[0]


def darcy_step(mesh: TriangleMesh, v, dt: float, check=True, recovery="average") -> BoundaryState:
    """Move boundary vertices along their normals with speed ``-grad_h v . n``.

    ``recovery`` selects the boundary gradient: ``"average"`` (default,
    area-weighted patch average) or ``"ppr"`` (local quadratic fit).
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    if recovery not in RECOVERY:
        raise ValueError(f"unknown gradient recovery {recovery!r}")
    bnd = mesh.boundary_vertices
    n = boundary_normals(mesh)
    g = RECOVERY[recovery](mesh, v, bnd)
    speed = -np.einsum("ij,ij->i", g, n)
    new = mesh.vertices[bnd] + (speed * dt)[:, None] * n
    state = BoundaryState(new, n, speed)
    if check:
        check_boundary(mesh, new)
    return state


def apply_boundary(mesh: TriangleMesh, state: BoundaryState) -> TriangleMesh:
    """Intermediate mesh: interior vertices unchanged, boundary at ``state.positions``."""
    x = mesh.vertices.copy()
    x[mesh.n_interior :] = state.positions
    return mesh.with_vertices(x)


def check_boundary(mesh: TriangleMesh, positions):
    """Raise :class:`BoundaryCollision` if boundary loops self-intersect or touch each other."""
    rings = []
    for loop in mesh.boundary_loops:
        ring = shapely.LinearRing(positions[loop - mesh.n_interior])
        if not ring.is_simple:
            raise BoundaryCollision("boundary loop self-intersects (topology change)")
        rings.append(ring)
    for a in range(len(rings)):
        for b in range(a + 1, len(rings)):
            if rings[a].intersects(rings[b]):
                raise BoundaryCollision("two boundary loops intersect")


def write_boundary_csv(path, rows):
    """Rows of ``(t, vertex_id, x, y, speed)``."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "vertex_id", "x", "y", "speed"])
        for row in rows:
            w.writerow([repr(float(row[0])), int(row[1]), repr(float(row[2])), repr(float(row[3])), repr(float(row[4]))])
