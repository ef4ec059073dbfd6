"""Triangular meshes with fixed connectivity and movable vertices.

Vertices are stored interior-first: indices ``0 .. n_interior-1`` are interior
vertices and the remaining ones lie on the boundary, grouped loop by loop in
traversal order.  All geometry is evaluated with vectorised numpy; the
connectivity-derived data (patches, neighbours, loops) lives in a shared
:class:`Topology` so that moving a mesh is just swapping its coordinate array.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .errors import NonPositiveArea, PointNotFound

logger = logging.getLogger(__name__)

DEGENERATE_REL = 1e-14
LOCATE_EPS = 1e-10


@dataclass(frozen=True)
class ElementFrame:
    """Edge matrix ``[x1 - x0, x2 - x0]`` and area of one triangle."""

    edge_matrix: np.ndarray
    area: float


@dataclass(eq=False)
class Topology:
    triangles: np.ndarray
    n_vertices: int
    n_interior: int
    boundary_loops: list
    patch_ptr: np.ndarray
    patch_idx: np.ndarray
    neighbors: np.ndarray
    edges: np.ndarray
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def n_elements(self):
        return len(self.triangles)


def _boundary_loops(triangles, n_vertices):
    """Directed boundary edges (domain on the left) chained into loops."""
    local = np.array([[1, 2], [2, 0], [0, 1]])
    directed = triangles[:, local].reshape(-1, 2)
    key = np.sort(directed, axis=1)
    _, inv, counts = np.unique(key, axis=0, return_inverse=True, return_counts=True)
    bnd = directed[counts[inv.ravel()] == 1]
    nxt = np.full(n_vertices, -1, dtype=np.int64)
    if len(bnd) and np.any(np.bincount(bnd[:, 0], minlength=n_vertices) > 1):
        raise ValueError("non-manifold boundary: a vertex has two outgoing boundary edges")
    nxt[bnd[:, 0]] = bnd[:, 1]
    loops = []
    seen = np.zeros(n_vertices, dtype=bool)
    for start in bnd[:, 0]:
        if seen[start]:
            continue
        loop = [start]
        seen[start] = True
        v = nxt[start]
        while v != start:
            if v < 0 or seen[v]:
                raise ValueError("boundary edges do not form closed loops")
            loop.append(v)
            seen[v] = True
            v = nxt[v]
        loops.append(np.array(loop, dtype=np.int64))
    return loops


def _build_topology(triangles, n_vertices, n_interior, loops):
    nt = len(triangles)
    flat = triangles.ravel()
    order = np.argsort(flat, kind="stable")
    patch_idx = (order // 3).astype(np.int64)
    patch_ptr = np.zeros(n_vertices + 1, dtype=np.int64)
    np.cumsum(np.bincount(flat, minlength=n_vertices), out=patch_ptr[1:])

    # neighbour across the edge opposite local vertex i
    local = np.array([[1, 2], [2, 0], [0, 1]])
    half = np.sort(triangles[:, local], axis=2).reshape(-1, 2)
    uniq, inv = np.unique(half, axis=0, return_inverse=True)
    inv = inv.ravel()
    neighbors = np.full(3 * nt, -1, dtype=np.int64)
    srt = np.argsort(inv, kind="stable")
    same = inv[srt[:-1]] == inv[srt[1:]]
    a, b = srt[:-1][same], srt[1:][same]
    neighbors[a] = b // 3
    neighbors[b] = a // 3
    return Topology(
        triangles=triangles,
        n_vertices=n_vertices,
        n_interior=n_interior,
        boundary_loops=loops,
        patch_ptr=patch_ptr,
        patch_idx=patch_idx,
        neighbors=neighbors.reshape(nt, 3),
        edges=uniq,
    )


class TriangleMesh:
    """A 2D conforming triangulation.

    Use :meth:`from_arrays` to build one from raw data; it orients the
    triangles counter-clockwise, reorders the vertices interior-first and
    extracts the boundary loops.  Instances are cheap to move with
    :meth:`with_vertices`, which keeps the topology object.
    """

    def __init__(self, vertices, topology: Topology):
        vertices = np.ascontiguousarray(vertices, dtype=float)
        if vertices.shape != (topology.n_vertices, 2):
            raise ValueError(f"expected vertices of shape ({topology.n_vertices}, 2), got {vertices.shape}")
        self.vertices = vertices
        self.topology = topology
        self._last_hit = 0

    @classmethod
    def from_arrays(cls, vertices, triangles, boundary_flag=None):
        vertices = np.asarray(vertices, dtype=float)
        triangles = np.asarray(triangles, dtype=np.int64).copy()
        if triangles.ndim != 2 or triangles.shape[1] != 3:
            raise ValueError("triangles must have shape (N, 3)")
        nv = len(vertices)
        used = np.zeros(nv, dtype=bool)
        used[triangles.ravel()] = True
        if not used.all():
            raise ValueError(f"{(~used).sum()} vertices are not referenced by any triangle")
        x = vertices[triangles]
        det = (x[:, 1, 0] - x[:, 0, 0]) * (x[:, 2, 1] - x[:, 0, 1]) - (x[:, 2, 0] - x[:, 0, 0]) * (
            x[:, 1, 1] - x[:, 0, 1]
        )
        flip = det < 0
        triangles[flip] = triangles[flip][:, [0, 2, 1]]

        loops = _boundary_loops(triangles, nv)
        on_bnd = np.zeros(nv, dtype=bool)
        for loop in loops:
            on_bnd[loop] = True
        if boundary_flag is not None and not np.array_equal(np.asarray(boundary_flag, dtype=bool), on_bnd):
            raise ValueError("boundary_flag disagrees with the boundary found from connectivity")

        interior = np.flatnonzero(~on_bnd)
        perm = np.concatenate([interior, *loops]) if loops else interior
        new_index = np.empty(nv, dtype=np.int64)
        new_index[perm] = np.arange(nv)
        triangles = new_index[triangles]
        n_int = len(interior)
        new_loops = []
        pos = n_int
        for loop in loops:
            new_loops.append(np.arange(pos, pos + len(loop)))
            pos += len(loop)
        topo = _build_topology(triangles, nv, n_int, new_loops)
        mesh = cls(vertices[perm], topo)
        mesh.original_index = perm
        return mesh

    def with_vertices(self, vertices):
        """Same connectivity, new coordinates."""
        return TriangleMesh(vertices, self.topology)

    def copy(self):
        return self.with_vertices(self.vertices.copy())

    @property
    def triangles(self):
        return self.topology.triangles

    @property
    def n_vertices(self):
        return self.topology.n_vertices

    @property
    def n_elements(self):
        return self.topology.n_elements

    @property
    def n_interior(self):
        return self.topology.n_interior

    @property
    def boundary_loops(self):
        return self.topology.boundary_loops

    @property
    def boundary_flag(self):
        flag = np.zeros(self.n_vertices, dtype=bool)
        flag[self.n_interior :] = True
        return flag

    @property
    def boundary_vertices(self):
        return np.arange(self.n_interior, self.n_vertices)

    def diameter(self):
        lo, hi = self.vertices.min(axis=0), self.vertices.max(axis=0)
        return float(np.hypot(*(hi - lo)))

    def edge_matrices(self):
        """Edge matrices for all elements, shape ``(N, 2, 2)``; columns are edges."""
        x = self.vertices[self.triangles]
        return np.stack([x[:, 1] - x[:, 0], x[:, 2] - x[:, 0]], axis=2)

    def signed_areas(self):
        x = self.vertices[self.triangles]
        e1 = x[:, 1] - x[:, 0]
        e2 = x[:, 2] - x[:, 0]
        return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])

    def degenerate_threshold(self):
        """Smallest acceptable ``det(E_K)``; scales with the mesh diameter squared."""
        return DEGENERATE_REL * self.diameter() ** 2

    def check_areas(self, what="mesh"):
        """Signed areas, raising :class:`NonPositiveArea` on any degenerate element."""
        areas = self.signed_areas()
        bad = np.flatnonzero(2.0 * areas <= self.degenerate_threshold())
        if len(bad):
            raise NonPositiveArea(
                f"{what}: {len(bad)} element(s) with nonpositive area, first {bad[:5].tolist()}, "
                f"min det={2 * areas.min():.3e}",
                elements=bad,
            )
        return areas

    def area(self):
        return float(self.signed_areas().sum())

    def centroids(self):
        return self.vertices[self.triangles].mean(axis=1)

    def vertex_adjacency(self):
        """Symmetric vertex adjacency (with diagonal) as a CSR matrix of ones."""
        from scipy import sparse

        cache = self.topology._cache
        if "adjacency" not in cache:
            e = self.topology.edges
            n = self.n_vertices
            rows = np.concatenate([e[:, 0], e[:, 1], np.arange(n)])
            cols = np.concatenate([e[:, 1], e[:, 0], np.arange(n)])
            cache["adjacency"] = sparse.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n))
        return cache["adjacency"]

    def __repr__(self):
        return (
            f"TriangleMesh(n_vertices={self.n_vertices}, n_elements={self.n_elements}, "
            f"n_interior={self.n_interior}, loops={len(self.boundary_loops)})"
        )


def element_frame(mesh: TriangleMesh, k: int) -> ElementFrame:
    tri = mesh.triangles[k]
    x = mesh.vertices[tri]
    E = np.column_stack([x[1] - x[0], x[2] - x[0]])
    det = E[0, 0] * E[1, 1] - E[0, 1] * E[1, 0]
    if det <= mesh.degenerate_threshold():
        raise NonPositiveArea(f"element {k} has det(E_K)={det:.3e}", elements=np.array([k]))
    return ElementFrame(E, 0.5 * det)


def element_patch(mesh: TriangleMesh, j: int) -> np.ndarray:
    """Indices of the elements that contain vertex ``j``."""
    topo = mesh.topology
    return topo.patch_idx[topo.patch_ptr[j] : topo.patch_ptr[j + 1]]


def _barycentric(mesh, k, p):
    x = mesh.vertices[mesh.triangles[k]]
    e1 = x[1] - x[0]
    e2 = x[2] - x[0]
    det = e1[0] * e2[1] - e1[1] * e2[0]
    d = p - x[0]
    l1 = (d[0] * e2[1] - d[1] * e2[0]) / det
    l2 = (e1[0] * d[1] - e1[1] * d[0]) / det
    return np.array([1.0 - l1 - l2, l1, l2])


def barycentric_many(mesh, elements, points):
    """Barycentric coordinates of ``points[i]`` in ``elements[i]``; shape ``(n, 3)``."""
    x = mesh.vertices[mesh.triangles[elements]]
    e1 = x[:, 1] - x[:, 0]
    e2 = x[:, 2] - x[:, 0]
    det = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
    d = points - x[:, 0]
    l1 = (d[:, 0] * e2[:, 1] - d[:, 1] * e2[:, 0]) / det
    l2 = (e1[:, 0] * d[:, 1] - e1[:, 1] * d[:, 0]) / det
    return np.column_stack([1.0 - l1 - l2, l1, l2])


def locate_point(mesh: TriangleMesh, p, start=None, eps=LOCATE_EPS):
    """Find the element containing ``p``.

    Walks across edges from ``start`` (default: the previous hit) towards
    ``p`` and falls back to a brute-force scan when the walk leaves the mesh
    or cycles.  Returns ``(element, barycentric)``; raises
    :class:`PointNotFound` if ``p`` is outside the mesh.
    """
    p = np.asarray(p, dtype=float)
    k = mesh._last_hit if start is None else int(start)
    if not 0 <= k < mesh.n_elements:
        k = 0
    nbr = mesh.topology.neighbors
    for _ in range(4 * int(np.sqrt(mesh.n_elements)) + 16):
        lam = _barycentric(mesh, k, p)
        i = int(np.argmin(lam))
        if lam[i] >= -eps:
            mesh._last_hit = k
            return k, lam
        k_next = nbr[k, i]
        if k_next < 0:
            break
        k = k_next

    lam = barycentric_many(mesh, np.arange(mesh.n_elements), np.broadcast_to(p, (mesh.n_elements, 2)))
    worst = lam.min(axis=1)
    k = int(np.argmax(worst))
    if worst[k] >= -eps:
        mesh._last_hit = k
        return k, lam[k]
    raise PointNotFound(f"point {p.tolist()} lies outside the mesh")


def locate_points(mesh: TriangleMesh, points, eps=LOCATE_EPS, candidates=8, project=False):
    """Vectorised :func:`locate_point` for many points.

    Candidates are the elements with the nearest centroids; points that miss
    all of them go through the walk.  With ``project=True`` points outside the
    mesh are mapped to the nearest element with clipped coordinates instead
    of raising; their indices are returned as the third value.
    """
    points = np.asarray(points, dtype=float)
    n = len(points)
    elem = np.full(n, -1, dtype=np.int64)
    bary = np.zeros((n, 3))
    k = min(candidates, mesh.n_elements)
    tree = cKDTree(mesh.centroids())
    _, cand = tree.query(points, k=k)
    cand = cand.reshape(n, k)
    todo = np.arange(n)
    for c in range(k):
        if not len(todo):
            break
        lam = barycentric_many(mesh, cand[todo, c], points[todo])
        ok = lam.min(axis=1) >= -eps
        hit = todo[ok]
        elem[hit] = cand[hit, c]
        bary[hit] = lam[ok]
        todo = todo[~ok]
    outside = []
    for i in todo:
        try:
            elem[i], bary[i] = locate_point(mesh, points[i], start=cand[i, 0], eps=eps)
        except PointNotFound:
            if not project:
                raise
            lam = barycentric_many(mesh, cand[i], np.broadcast_to(points[i], (k, 2)))
            j = int(np.argmax(lam.min(axis=1)))
            clipped = np.clip(lam[j], 0.0, None)
            elem[i] = cand[i, j]
            bary[i] = clipped / clipped.sum()
            outside.append(i)
    if project:
        return elem, bary, np.array(outside, dtype=np.int64)
    return elem, bary


def boundary_normals(mesh: TriangleMesh) -> np.ndarray:
    """Outward unit normals at all boundary vertices, shape ``(N_b, 2)``.

    Each vertex normal is the renormalised mean of the unit outward normals
    of its two boundary edges.  Both edges meet at the same vertex angle, so
    the angle weights coincide and the result bisects the two edge normals.
    """
    out = np.empty((mesh.n_vertices - mesh.n_interior, 2))
    for loop in mesh.boundary_loops:
        x = mesh.vertices[loop]
        e = np.roll(x, -1, axis=0) - x  # edge i -> i+1, domain on the left
        en = np.column_stack([e[:, 1], -e[:, 0]])
        en /= np.linalg.norm(en, axis=1)[:, None]
        nv = en + np.roll(en, 1, axis=0)
        nv /= np.linalg.norm(nv, axis=1)[:, None]
        out[loop - mesh.n_interior] = nv
    return out


def boundary_normal(mesh: TriangleMesh, i: int) -> np.ndarray:
    if i < mesh.n_interior:
        raise ValueError(f"vertex {i} is not a boundary vertex")
    return boundary_normals(mesh)[i - mesh.n_interior]


def boundary_tangents(mesh: TriangleMesh) -> np.ndarray:
    """Unit tangents (loop direction) at boundary vertices."""
    n = boundary_normals(mesh)
    return np.column_stack([-n[:, 1], n[:, 0]])


def turning_angles(mesh: TriangleMesh) -> np.ndarray:
    """Exterior turning angle at each boundary vertex (0 on a straight segment)."""
    out = np.empty(mesh.n_vertices - mesh.n_interior)
    for loop in mesh.boundary_loops:
        x = mesh.vertices[loop]
        e_next = np.roll(x, -1, axis=0) - x
        e_prev = x - np.roll(x, 1, axis=0)
        cross = e_prev[:, 0] * e_next[:, 1] - e_prev[:, 1] * e_next[:, 0]
        dot = np.einsum("ij,ij->i", e_prev, e_next)
        out[loop - mesh.n_interior] = np.arctan2(cross, dot)
    return out


def loop_polygon_area(mesh: TriangleMesh) -> float:
    """Signed area enclosed by the boundary loops (shoelace)."""
    total = 0.0
    for loop in mesh.boundary_loops:
        x = mesh.vertices[loop]
        xn = np.roll(x, -1, axis=0)
        total += 0.5 * np.sum(x[:, 0] * xn[:, 1] - xn[:, 0] * x[:, 1])
    return float(total)


# --- I/O ------------------------------------------------------------------


def read_mesh(path) -> TriangleMesh:
    """Read the plain-text format: ``N_v N``, vertex lines ``x y flag``, triangle lines."""
    with open(path) as fh:
        header = fh.readline().split()
        nv, nt = int(header[0]), int(header[1])
        vdata = np.loadtxt(fh, max_rows=nv, ndmin=2)
        tdata = np.loadtxt(fh, max_rows=nt, dtype=np.int64, ndmin=2)
    if vdata.shape != (nv, 3) or tdata.shape != (nt, 3):
        raise ValueError(f"{path}: malformed mesh file")
    return TriangleMesh.from_arrays(vdata[:, :2], tdata, boundary_flag=vdata[:, 2] != 0)


def write_mesh(mesh: TriangleMesh, path):
    with open(path, "w") as fh:
        fh.write(f"{mesh.n_vertices} {mesh.n_elements}\n")
        flag = mesh.boundary_flag.astype(int)
        for (x, y), b in zip(mesh.vertices, flag):
            fh.write(f"{x:.17g} {y:.17g} {b}\n")
        np.savetxt(fh, mesh.triangles, fmt="%d")


def write_vtk(mesh: TriangleMesh, path, v=None, title="pmev"):
    """Legacy ASCII VTK unstructured grid with optional point scalar ``v``."""
    nv, nt = mesh.n_vertices, mesh.n_elements
    lines = ["# vtk DataFile Version 3.0", title, "ASCII", "DATASET UNSTRUCTURED_GRID"]
    lines.append(f"POINTS {nv} double")
    lines.extend(f"{x:.17g} {y:.17g} 0" for x, y in mesh.vertices)
    lines.append(f"CELLS {nt} {4 * nt}")
    lines.extend(f"3 {a} {b} {c}" for a, b, c in mesh.triangles)
    lines.append(f"CELL_TYPES {nt}")
    lines.extend(["5"] * nt)
    if v is not None:
        lines.append(f"POINT_DATA {nv}")
        lines.append("SCALARS v double 1")
        lines.append("LOOKUP_TABLE default")
        lines.extend(f"{val:.17g}" for val in np.asarray(v))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
