"""P1 finite elements for the pressure equation on a moving mesh.

On each slab the mesh vertices move linearly in time, and the semi-discrete
system reads

    B(X) dV/dt = F(V, X, Xdot),
    F_i = int grad v_h . (Xdot phi_i - m v_h grad phi_i) + (1 - m) int |grad v_h|^2 phi_i,

with test functions attached to interior vertices only (homogeneous
Dirichlet data on the moving boundary).  All element integrals have closed
forms for P1 data, so no quadrature is needed.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.sparse import csr_matrix

from . import radau
from .errors import NonPositiveArea
from .mesh import TriangleMesh

logger = logging.getLogger(__name__)

_LOCAL_MASS = (np.ones((3, 3)) + np.eye(3)) / 12.0


class _Pattern:
    """Scatter map from element-local 3x3 blocks to a fixed CSR pattern."""

    def __init__(self, triangles, n):
        rows = np.repeat(triangles, 3, axis=1).ravel()
        cols = np.tile(triangles, (1, 3)).ravel()
        mask = (rows < n) & (cols < n)
        key = rows[mask] * n + cols[mask]
        uniq, inv = np.unique(key, return_inverse=True)
        self.mask = mask
        self.inv = inv
        self.nnz = len(uniq)
        self.n = n
        self.indices = (uniq % n).astype(np.int32)
        self.indptr = np.zeros(n + 1, dtype=np.int32)
        np.cumsum(np.bincount(uniq // n, minlength=n), out=self.indptr[1:])

    def assemble(self, local):
        data = np.bincount(self.inv, weights=local.reshape(-1)[self.mask], minlength=self.nnz)
        return csr_matrix((data, self.indices, self.indptr), shape=(self.n, self.n))


def _pattern(mesh: TriangleMesh, interior_only=True):
    key = "p1_pattern_int" if interior_only else "p1_pattern_all"
    cache = mesh.topology._cache
    if key not in cache:
        n = mesh.n_interior if interior_only else mesh.n_vertices
        cache[key] = _Pattern(mesh.triangles, n)
    return cache[key]


def basis_gradients(vertices, triangles, threshold=0.0):
    """Areas ``(N,)`` and barycentric gradients ``(N, 3, 2)`` for all elements."""
    x = vertices[triangles]
    e1 = x[:, 1] - x[:, 0]
    e2 = x[:, 2] - x[:, 0]
    det = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
    if np.any(det <= threshold):
        bad = np.flatnonzero(det <= threshold)
        raise NonPositiveArea(f"{len(bad)} element(s) with nonpositive area, min det={det.min():.3e}", elements=bad)
    g1 = np.column_stack([e2[:, 1], -e2[:, 0]]) / det[:, None]
    g2 = np.column_stack([-e1[:, 1], e1[:, 0]]) / det[:, None]
    grads = np.stack([-(g1 + g2), g1, g2], axis=1)
    return 0.5 * det, grads


def assemble_mass(mesh: TriangleMesh, interior_only=True):
    """Consistent P1 mass matrix (interior rows/columns by default)."""
    area = mesh.check_areas()
    local = area[:, None, None] * _LOCAL_MASS
    return _pattern(mesh, interior_only).assemble(local)


@dataclass
class MeshTrajectory:
    """Vertices moving linearly from ``start`` at ``t0`` to ``end`` at ``t1``."""

    start: TriangleMesh
    end: TriangleMesh
    t0: float
    t1: float

    def __post_init__(self):
        if self.start.topology is not self.end.topology:
            raise ValueError("trajectory meshes must share connectivity")
        if not self.t1 > self.t0:
            raise ValueError("trajectory needs t1 > t0")
        self.velocity = (self.end.vertices - self.start.vertices) / (self.t1 - self.t0)

    def vertices_at(self, t):
        return self.start.vertices + (t - self.t0) * self.velocity

    def mesh_at(self, t):
        return self.start.with_vertices(self.vertices_at(t))

    @classmethod
    def static(cls, mesh, t0, t1):
        return cls(mesh, mesh, t0, t1)


class PressureSystem:
    """Mass matrix, right-hand side and Jacobian of the semi-discrete system."""

    def __init__(self, trajectory: MeshTrajectory, m: float):
        self.traj = trajectory
        self.m = float(m)
        mesh = trajectory.start
        self.triangles = mesh.triangles
        self.n_vertices = mesh.n_vertices
        self.n_interior = mesh.n_interior
        self.pattern = _pattern(mesh, True)
        self.threshold = max(mesh.degenerate_threshold(), trajectory.end.degenerate_threshold())
        self._geom = {}
        self._xdot = trajectory.velocity[self.triangles]  # (N, 3, 2)

    def geometry(self, t):
        g = self._geom.get(t)
        if g is None:
            if len(self._geom) > 16:
                self._geom.clear()
            try:
                g = basis_gradients(self.traj.vertices_at(t), self.triangles, self.threshold)
            except NonPositiveArea as exc:
                raise NonPositiveArea(f"stage mesh at t={t:.8g}: {exc}", exc.elements) from exc
            self._geom[t] = g
        return g

    def full(self, V):
        v = np.zeros(self.n_vertices)
        v[: self.n_interior] = V
        return v

    def mass(self, t):
        area, _ = self.geometry(t)
        return self.pattern.assemble(area[:, None, None] * _LOCAL_MASS)

    def _element_terms(self, t, v):
        area, grads = self.geometry(t)
        vk = v[self.triangles]
        g = np.einsum("ka,kad->kd", vk, grads)
        vbar = vk.mean(axis=1)
        w = (area / 12.0)[:, None, None] * (self._xdot.sum(axis=1)[:, None, :] + self._xdot)
        return area, grads, g, vbar, w

    def rhs_full(self, t, v):
        """``F_i`` for every vertex (boundary test functions included) from full nodal values."""
        area, grads, g, vbar, w = self._element_terms(t, v)
        m = self.m
        local = np.einsum("kd,kid->ki", g, w)
        local -= (m * area * vbar)[:, None] * np.einsum("kd,kid->ki", g, grads)
        local += ((1.0 - m) * area / 3.0 * np.einsum("kd,kd->k", g, g))[:, None]
        return np.bincount(self.triangles.ravel(), weights=local.ravel(), minlength=self.n_vertices)

    def rhs(self, t, V):
        return self.rhs_full(t, self.full(V))[: self.n_interior]

    def jacobian(self, t, V):
        area, grads, g, vbar, w = self._element_terms(t, self.full(V))
        m = self.m
        GG = np.einsum("kid,kjd->kij", grads, grads)
        gphi = np.einsum("kd,kid->ki", g, grads)
        local = np.einsum("kjd,kid->kij", grads, w)
        local -= m * area[:, None, None] * (vbar[:, None, None] * GG + gphi[:, :, None] / 3.0)
        local += (2.0 * (1.0 - m) / 3.0) * area[:, None, None] * gphi[:, None, :]
        return self.pattern.assemble(local)


def assemble_rhs(v, trajectory: MeshTrajectory, t, m, all_vertices=False):
    """Right-hand side ``F`` at time ``t``; ``v`` holds values at all vertices."""
    sys = PressureSystem(trajectory, m)
    F = sys.rhs_full(t, np.asarray(v, dtype=float))
    return F if all_vertices else F[: sys.n_interior]


def step_physical(v_n, trajectory: MeshTrajectory, m, rtol=1e-6, atol=1e-8, first_step=None, stats=None):
    """Advance nodal values ``v_n`` (all vertices) across the slab.

    Returns the new nodal values with zero boundary entries.
    """
    sys = PressureSystem(trajectory, m)
    V0 = np.asarray(v_n, dtype=float)[: sys.n_interior]
    V1, stats = radau.integrate(
        sys.rhs,
        sys.mass,
        sys.jacobian,
        (trajectory.t0, trajectory.t1),
        V0,
        rtol=rtol,
        atol=atol,
        first_step=first_step,
        stats=stats,
    )
    return sys.full(V1), stats
