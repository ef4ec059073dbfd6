"""Quasi-uniform initial meshes for the three model problems."""

from __future__ import annotations

import logging

import numpy as np
from scipy.spatial import Delaunay

from .errors import GenerationFailure
from .exact import in_complex_support
from .mesh import TriangleMesh

logger = logging.getLogger(__name__)

WAITING_RADIUS = np.pi / 2


def disk_mesh(radius, n_rings, center=(0.0, 0.0)) -> TriangleMesh:
    """Concentric-ring disk mesh: ring ``k`` carries ``6k`` points, ``6 n^2`` triangles."""
    if n_rings < 1:
        raise GenerationFailure("need at least one ring")
    pts = [np.zeros((1, 2))]
    for k in range(1, n_rings + 1):
        r = radius * k / n_rings
        if k == n_rings:
            r = radius
        phi = 2 * np.pi * (np.arange(6 * k) + 0.5 * (k % 2)) / (6 * k)
        pts.append(np.column_stack([r * np.cos(phi), r * np.sin(phi)]))
    pts = np.vstack(pts) + np.asarray(center)
    tri = Delaunay(pts).simplices
    mesh = TriangleMesh.from_arrays(pts, tri)
    _validate(mesh, "disk")
    bnd = mesh.vertices[mesh.n_interior :] - np.asarray(center)
    bnd *= (radius / np.linalg.norm(bnd, axis=1))[:, None]
    x = mesh.vertices.copy()
    x[mesh.n_interior :] = bnd + np.asarray(center)
    return mesh.with_vertices(x)


def disk_mesh_for(radius, n_target) -> TriangleMesh:
    return disk_mesh(radius, max(2, int(round(np.sqrt(n_target / 6.0)))))


def _donut_points(h):
    nr = max(2, 2 * int(round(0.25 / h)))  # even, so cap half-rings meet band levels
    dr = 0.5 / nr
    pts = []
    for i in range(nr + 1):
        r = 0.5 + i * dr
        n_arc = max(3, int(round(r * 1.5 * np.pi / h)))
        phi = np.linspace(0.5 * np.pi, 2.0 * np.pi, n_arc + 1)
        pts.append(np.column_stack([r * np.cos(phi), r * np.sin(phi)]))
    nc = nr // 2
    for center, start in (((0.0, 0.75), -0.5 * np.pi), ((0.75, 0.0), 0.0)):
        for k in range(1, nc + 1):
            rho = 0.25 * k / nc
            n_arc = max(2, int(round(np.pi * rho / h)))
            ang = start + np.pi * np.arange(1, n_arc) / n_arc
            pts.append(np.column_stack([center[0] + rho * np.cos(ang), center[1] + rho * np.sin(ang)]))
    return np.vstack(pts)


def _smooth(mesh, sweeps):
    """Laplacian smoothing of interior vertices, rejecting sweeps that invert elements."""
    adj = mesh.vertex_adjacency().tolil()
    adj.setdiag(0)
    adj = adj.tocsr()
    deg = np.asarray(adj.sum(axis=1)).ravel()
    ni = mesh.n_interior
    for _ in range(sweeps):
        x = mesh.vertices.copy()
        avg = (adj @ mesh.vertices) / deg[:, None]
        x[:ni] = 0.5 * x[:ni] + 0.5 * avg[:ni]
        trial = mesh.with_vertices(x)
        if np.min(trial.signed_areas()) <= 0:
            break
        mesh = trial
    return mesh


def donut_mesh(h, smooth_sweeps=3) -> TriangleMesh:
    """Partial donut: a 3/4 annulus 0.5 <= r <= 1 capped by two half disks of radius 1/4."""
    pts = _donut_points(h)
    tri = Delaunay(pts).simplices
    cent = pts[tri].mean(axis=1)
    keep = in_complex_support(cent, tol=0.0)
    x = pts[tri[keep]]
    area = 0.5 * np.abs(
        (x[:, 1, 0] - x[:, 0, 0]) * (x[:, 2, 1] - x[:, 0, 1]) - (x[:, 2, 0] - x[:, 0, 0]) * (x[:, 1, 1] - x[:, 0, 1])
    )
    tri = tri[keep][area > 1e-12 * h * h]
    used = np.unique(tri)
    remap = np.full(len(pts), -1)
    remap[used] = np.arange(len(used))
    mesh = TriangleMesh.from_arrays(pts[used], remap[tri])
    if len(mesh.boundary_loops) != 1:
        raise GenerationFailure(f"donut mesh has {len(mesh.boundary_loops)} boundary loops")
    mesh = _smooth(mesh, smooth_sweeps)
    _validate(mesh, "donut")
    return mesh


def donut_mesh_for(n_target) -> TriangleMesh:
    area = 0.75 * np.pi * (1.0 - 0.25) + np.pi * 0.25**2
    h = np.sqrt(4.0 * area / (np.sqrt(3.0) * n_target))
    for _ in range(6):
        mesh = donut_mesh(h)
        ratio = mesh.n_elements / n_target
        if 0.9 <= ratio <= 1.1:
            break
        h *= np.sqrt(ratio)
    return mesh


def _validate(mesh, what):
    areas = mesh.signed_areas()
    if np.min(areas) <= 0:
        raise GenerationFailure(f"{what} mesh has nonpositive elements")


def make_initial_mesh(example, n_target, r0=0.5) -> TriangleMesh:
    """Initial quasi-uniform mesh of the support for ``example`` in {bp, waiting, complex}."""
    if n_target < 16:
        raise GenerationFailure("n_target must be at least 16")
    if example == "bp":
        return disk_mesh_for(r0, n_target)
    if example == "waiting":
        return disk_mesh_for(WAITING_RADIUS, n_target)
    if example == "complex":
        return donut_mesh_for(n_target)
    raise GenerationFailure(f"unknown example {example!r}")
