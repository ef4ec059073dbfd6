"""Mesh movement by the xi-formulation of the MMPDE.

The physical mesh is held fixed while the computational vertices follow the
gradient flow of the meshing functional

    I_h = sum_K |K| G(J_K, det J_K, M_K),   J_K = Ehat_K E_K^{-1},

after which the new physical mesh is read off the piecewise affine map from
the evolved computational mesh to the physical one.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.integrate import BDF

from .errors import MeshTangled, NonPositiveArea
from .mesh import TriangleMesh, boundary_tangents, locate_points, turning_angles
from .metric import MetricField

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class MmpdeParams:
    theta: float = 1.0 / 3.0
    p: float = 2.0
    tau: float = 1e-3
    d: int = 2

    def __post_init__(self):
        if not 0.0 < self.theta <= 0.5:
            raise ValueError(f"theta must lie in (0, 1/2], got {self.theta}")
        if self.p <= 1.0:
            raise ValueError(f"p must exceed 1, got {self.p}")
        if self.tau <= 0.0:
            raise ValueError(f"tau must be positive, got {self.tau}")
        if self.d != 2:
            raise ValueError("only d = 2 is supported")


def tau_rule(n_elements, cap=1e-3, numerator=1e-1):
    """Default mesh relaxation time ``min(cap, numerator / N)``."""
    return min(cap, numerator / n_elements)


# --- batched 2x2 helpers ---------------------------------------------------


def _det(A):
    return A[..., 0, 0] * A[..., 1, 1] - A[..., 0, 1] * A[..., 1, 0]


def _inv(A, det=None):
    if det is None:
        det = _det(A)
    out = np.empty_like(A)
    out[..., 0, 0] = A[..., 1, 1]
    out[..., 1, 1] = A[..., 0, 0]
    out[..., 0, 1] = -A[..., 0, 1]
    out[..., 1, 0] = -A[..., 1, 0]
    return out / det[..., None, None]


def _edge_matrices(vertices, triangles):
    x = vertices[triangles]
    return np.stack([x[:, 1] - x[:, 0], x[:, 2] - x[:, 0]], axis=2)


def _as_tensors(M):
    if isinstance(M, MetricField):
        return M.tensors
    M = np.asarray(M, dtype=float)
    return M if M.ndim == 3 else M[None]


def functional_density(J, M, params: MmpdeParams):
    """``G(J, det J, M)`` for batches of 2x2 matrices."""
    th, p, d = params.theta, params.p, params.d
    dp = d * p
    detM = _det(M)
    sdM = np.sqrt(detM)
    Minv = _inv(M, detM)
    tr = np.einsum("kij,kjl,kil->k", J, Minv, J)
    detJ = _det(J)
    return th * sdM * tr ** (dp / 2) + (1 - 2 * th) * d ** (dp / 2) * sdM * (detJ / sdM) ** p


def _local_velocity_rows(Ehat, Einv, detE, M, params):
    """Rows ``v_1^T, v_2^T`` of the local velocities for all elements, shape (N, 2, 2)."""
    th, p, d = params.theta, params.p, params.d
    dp = d * p
    detEh = _det(Ehat)
    J = Ehat @ Einv
    detM = _det(M)
    sdM = np.sqrt(detM)
    Minv = _inv(M, detM)
    MinvJt = Minv @ np.swapaxes(J, 1, 2)
    tr = np.einsum("kij,kji->k", J, MinvJt)
    detJ = detEh / detE
    dG_dJ = (dp * th * sdM * tr ** (dp / 2 - 1))[:, None, None] * MinvJt
    dG_ddet = p * (1 - 2 * th) * d ** (dp / 2) * detM ** ((1 - p) / 2) * detJ ** (p - 1)
    return -(Einv @ dG_dJ) - (dG_ddet * detJ)[:, None, None] * _inv(Ehat, detEh)


def _local_velocity_rows_isotropic(e00, e01, e10, e11, i00, i01, i10, i11, detE, c, params):
    """Component-wise :func:`_local_velocity_rows` for ``M_K = c_K I``.

    ``e..`` are the entries of the computational edge matrices, ``i..`` those
    of the inverse physical edge matrices.  Returns the four entries of the
    rows ``v_1^T, v_2^T``.
    """
    th, p, d = params.theta, params.p, params.d
    dp = d * p
    # J = Ehat Einv
    j00 = e00 * i00 + e01 * i10
    j01 = e00 * i01 + e01 * i11
    j10 = e10 * i00 + e11 * i10
    j11 = e10 * i01 + e11 * i11
    detEh = e00 * e11 - e01 * e10
    detJ = detEh / detE
    tr = (j00 * j00 + j01 * j01 + j10 * j10 + j11 * j11) / c
    a = dp * th * tr ** (dp / 2 - 1)  # dG/dJ = a J^T
    b = p * (1 - 2 * th) * d ** (dp / 2) * c ** (1 - p) * detJ ** (p - 1) * detJ / detEh
    # -(Einv a J^T) - b adj(Ehat)
    r00 = -a * (i00 * j00 + i01 * j01) - b * e11
    r01 = -a * (i00 * j10 + i01 * j11) + b * e01
    r10 = -a * (i10 * j00 + i11 * j01) + b * e10
    r11 = -a * (i10 * j10 + i11 * j11) - b * e00
    return r00, r01, r10, r11


def local_velocities(K_frame, Kc_frame, M_K, params: MmpdeParams):
    """Velocities ``(v_0, v_1, v_2)`` contributed by one element to its computational vertices.

    ``K_frame`` is the physical element, ``Kc_frame`` its computational image.
    """
    E = np.asarray(K_frame.edge_matrix, dtype=float)[None]
    Eh = np.asarray(Kc_frame.edge_matrix, dtype=float)[None]
    detE = _det(E)
    rows = _local_velocity_rows(Eh, _inv(E, detE), detE, np.asarray(M_K, dtype=float)[None], params)[0]
    return np.vstack([-(rows[0] + rows[1]), rows[0], rows[1]])


def mesh_energy(Tc: TriangleMesh, Th: TriangleMesh, M, params: MmpdeParams) -> float:
    """The meshing functional ``I_h`` of computational mesh ``Tc`` against physical ``Th``."""
    areas = Th.check_areas("physical mesh")
    Tc.check_areas("computational mesh")
    E = Th.edge_matrices()
    J = Tc.edge_matrices() @ _inv(E)
    return float(np.sum(areas * functional_density(J, _as_tensors(M), params)))


class BoundarySliding:
    """Keeps computational boundary vertices on the reference boundary.

    Velocities are projected onto the reference tangent; vertices whose
    turning angle exceeds ``corner_angle`` are pinned.  :meth:`snap` moves
    vertices back onto the reference polygon after integration.
    """

    def __init__(self, reference: TriangleMesh, corner_angle=np.pi / 6, fixed=False):
        self.n_interior = reference.n_interior
        self.tangents = boundary_tangents(reference)
        self.pinned = np.abs(turning_angles(reference)) > corner_angle
        if fixed:
            self.pinned[:] = True
        self.tangents[self.pinned] = 0.0
        self.loops = [reference.vertices[loop] for loop in reference.boundary_loops]
        self.loop_index = [loop - reference.n_interior for loop in reference.boundary_loops]

    def project(self, vel):
        b = vel[self.n_interior :]
        b[:] = np.einsum("ij,ij->i", b, self.tangents)[:, None] * self.tangents
        return vel

    def projector(self, n_vertices):
        """Sparse block-diagonal matrix applying :meth:`project` to a flattened velocity."""
        blocks = np.tile(np.eye(2), (n_vertices, 1, 1))
        blocks[self.n_interior :] = np.einsum("bi,bj->bij", self.tangents, self.tangents)
        idx = np.arange(2 * n_vertices).reshape(-1, 2)
        rows = np.repeat(idx, 2, axis=1).ravel()
        cols = np.tile(idx, (1, 2)).ravel()
        return sparse.csr_matrix((blocks.ravel(), (rows, cols)), shape=(2 * n_vertices, 2 * n_vertices))

    def snap(self, xi):
        xi = xi.copy()
        for poly, idx in zip(self.loops, self.loop_index):
            xi[self.n_interior + idx] = project_to_polygon(xi[self.n_interior + idx], poly)
        return xi


def _polygon_feet(points, poly):
    """Closest points on the closed polyline ``poly`` and their arc-length parameters."""
    a = poly
    b = np.roll(poly, -1, axis=0)
    ab = b - a
    ap = points[:, None, :] - a[None]
    s = np.clip(np.einsum("psk,sk->ps", ap, ab) / np.einsum("sk,sk->s", ab, ab), 0.0, 1.0)
    foot = a[None] + s[..., None] * ab[None]
    dist = np.einsum("psk,psk->ps", points[:, None] - foot, points[:, None] - foot)
    best = np.argmin(dist, axis=1)
    rows = np.arange(len(points))
    seg = np.linalg.norm(ab, axis=1)
    start = np.concatenate([[0.0], np.cumsum(seg)[:-1]])
    return foot[rows, best], start[best] + s[rows, best] * seg[best]


def project_to_polygon(points, poly):
    """Closest points on the closed polyline ``poly`` to each of ``points``."""
    return _polygon_feet(points, poly)[0]


class XiSystem:
    """Right-hand side of the computational-vertex ODE for a fixed physical mesh."""

    def __init__(self, Th: TriangleMesh, M, params: MmpdeParams, sliding: BoundarySliding | None = None):
        self.params = params
        self.triangles = Th.triangles
        self.n_vertices = Th.n_vertices
        self.area = Th.check_areas("physical mesh")
        E = Th.edge_matrices()
        self.detE = _det(E)
        self.Einv = _inv(E, self.detE)
        self.M = _as_tensors(M)
        if isinstance(M, MetricField):
            vertex_det = M.vertex_scale**2
        else:
            raise TypeError("nodal velocities need a MetricField carrying vertex values")
        self.P = vertex_det ** ((params.p - 1) / 2)
        self.sliding = sliding
        tri = self.triangles
        self._scatter = np.concatenate([tri[:, 0], tri[:, 1], tri[:, 2]])
        Ei = self.Einv
        self._iso = None
        if isinstance(M, MetricField):
            self._iso = (Ei[:, 0, 0], Ei[:, 0, 1], Ei[:, 1, 0], Ei[:, 1, 1], self.detE, M.scale)
        dof = np.stack([2 * tri, 2 * tri + 1], axis=2).reshape(-1, 6)  # (x0, y0, x1, y1, x2, y2)
        self._hess_rows = np.repeat(dof, 6, axis=1).ravel()
        self._hess_cols = np.tile(dof, (1, 6)).ravel()
        scale = (-self.P / params.tau).repeat(2)
        self._vel_map = sparse.diags(scale)
        if sliding is not None:
            self._vel_map = sliding.projector(self.n_vertices) @ self._vel_map

    def energy_gradient(self, xi):
        """``dI_h / dxi`` at every vertex, shape ``(N_v, 2)`` (no balancing factor, no sliding)."""
        tri = self.triangles
        n = self.n_vertices
        if self._iso is not None:
            x0, x1, x2 = xi[tri[:, 0]], xi[tri[:, 1]], xi[tri[:, 2]]
            r00, r01, r10, r11 = _local_velocity_rows_isotropic(
                x1[:, 0] - x0[:, 0], x2[:, 0] - x0[:, 0], x1[:, 1] - x0[:, 1], x2[:, 1] - x0[:, 1], *self._iso, self.params
            )
            a = self.area
            cx = np.concatenate([(r00 + r10) * a, -r00 * a, -r10 * a])
            cy = np.concatenate([(r01 + r11) * a, -r01 * a, -r11 * a])
        else:
            Eh = _edge_matrices(xi, tri)
            rows = _local_velocity_rows(Eh, self.Einv, self.detE, self.M, self.params)
            rows *= self.area[:, None, None]
            v1, v2 = rows[:, 0], rows[:, 1]
            cx = np.concatenate([v1[:, 0] + v2[:, 0], -v1[:, 0], -v2[:, 0]])
            cy = np.concatenate([v1[:, 1] + v2[:, 1], -v1[:, 1], -v2[:, 1]])
        return np.column_stack(
            [np.bincount(self._scatter, weights=cx, minlength=n), np.bincount(self._scatter, weights=cy, minlength=n)]
        )

    def velocities(self, xi):
        vel = self.energy_gradient(xi)
        vel *= (-self.P / self.params.tau)[:, None]
        if self.sliding is not None:
            self.sliding.project(vel)
        return vel

    def rhs(self, t, y):
        return self.velocities(y.reshape(-1, 2)).ravel()

    def energy_hessian(self, xi):
        """Sparse Hessian of ``I_h`` in the flattened coordinates ``(x_0, y_0, x_1, ...)``.

        The element energy depends on the computational edge entries
        ``q = (e00, e01, e10, e11)`` only; its 4x4 Hessian is obtained exactly
        by complex-step differentiation of the (analytic) gradient kernel and
        then mapped to the six vertex coordinates.
        """
        tri = self.triangles
        x = xi[tri]
        e = x[:, 1:] - x[:, :1]  # (N, 2 edges, 2 coords)
        q = np.stack([e[:, 0, 0], e[:, 1, 0], e[:, 0, 1], e[:, 1, 1]])
        step = 1e-30
        Hq = np.empty((len(tri), 4, 4))
        for j in range(4):
            qc = q.astype(complex)
            qc[j] += 1j * step
            r00, r01, r10, r11 = _local_velocity_rows_isotropic(*qc, *self._iso, self.params)
            # dI/d(x1, x2, y1, y2) = -|K| (r00, r10, r01, r11), matching the order of q
            Hq[:, :, j] = -(self.area * np.stack([r00, r10, r01, r11]).imag / step).T
        # q = B u with u = (x0, y0, x1, y1, x2, y2)
        B = np.array([[-1, 0, 1, 0, 0, 0], [-1, 0, 0, 0, 1, 0], [0, -1, 0, 1, 0, 0], [0, -1, 0, 0, 0, 1]], dtype=float)
        H = np.einsum("ai,kab,bj->kij", B, Hq, B)
        n = 2 * self.n_vertices
        return sparse.csr_matrix((H.ravel(), (self._hess_rows, self._hess_cols)), shape=(n, n))

    def jacobian(self, t, y):
        """Exact Jacobian of :meth:`rhs` (sparse)."""
        return (self._vel_map @ self.energy_hessian(y.reshape(-1, 2))).tocsc()

    def energy(self, xi):
        J = _edge_matrices(xi, self.triangles) @ self.Einv
        return float(np.sum(self.area * functional_density(J, self.M, self.params)))


def nodal_velocities(Tc: TriangleMesh, Th: TriangleMesh, M: MetricField, params: MmpdeParams, sliding=None):
    """``d xi_j / dt`` for every vertex, shape ``(N_v, 2)``."""
    return XiSystem(Th, M, params, sliding).velocities(Tc.vertices)


def _min_det(xi, triangles):
    return _det(_edge_matrices(xi, triangles)).min()


def _explicit_flow(system, xi0, t_span, threshold, max_halvings=30):
    """Forward Euler with step tau/10, halving on tangling or energy increase."""
    t, t_end = t_span
    h = system.params.tau / 10
    xi = xi0.copy()
    energy = system.energy(xi)
    halvings = 0
    while t < t_end - 1e-14 * max(1.0, abs(t_end)):
        step = min(h, t_end - t)
        trial = xi + step * system.velocities(xi)
        ok = _min_det(trial, system.triangles) > threshold
        e_trial = system.energy(trial) if ok else np.inf
        if not ok or e_trial > energy + 1e-12 * abs(energy):
            h *= 0.5
            halvings += 1
            if halvings > max_halvings:
                raise MeshTangled("explicit xi-flow fallback could not keep the computational mesh valid")
            continue
        xi, energy, t = trial, e_trial, t + step
    return xi


def _bdf_flow(system, y0, t0, t1, rtol, atol, stats=None):
    """Integrate the xi-flow with scipy's BDF, stopping once it is stationary.

    The flow relaxes to a steady state within a few multiples of ``tau``;
    integrating the remainder of a long slab only costs time, so
    integration ends early when
    ``max|xi'| * (t1 - t) <= atol``, which bounds the remaining motion by the
    absolute tolerance.
    """
    solver = BDF(system.rhs, t0, y0, t1, rtol=rtol, atol=atol, jac=system.jacobian)
    message = None
    while solver.status == "running":
        message = solver.step()
        if solver.status == "failed":
            break
        if solver.status == "running" and np.max(np.abs(system.rhs(solver.t, solver.y))) * (t1 - solver.t) <= atol:
            if stats is not None:
                stats["xi_early_stops"] = stats.get("xi_early_stops", 0) + 1
            break
    if stats is not None:
        stats["xi_nfev"] = stats.get("xi_nfev", 0) + solver.nfev
        stats["xi_njev"] = stats.get("xi_njev", 0) + solver.njev
    return solver.y, solver.status != "failed", message


def integrate_xi(
    Tc_init: TriangleMesh,
    Th_fixed: TriangleMesh,
    M: MetricField,
    params: MmpdeParams,
    t_span,
    rtol=1e-6,
    atol=1e-8,
    sliding: BoundarySliding | None = None,
    stats: dict | None = None,
) -> TriangleMesh:
    """Integrate the xi-flow over ``t_span`` starting from ``Tc_init``.

    Uses scipy's BDF with the exact sparse Jacobian (see :func:`_bdf_flow`
    for the steady-state stop); if that fails
    or tangles the computational mesh, falls back to damped explicit steps.
    """
    if sliding is None:
        sliding = BoundarySliding(Tc_init)
    system = XiSystem(Th_fixed, M, params, sliding)
    xi0 = Tc_init.vertices
    threshold = Tc_init.degenerate_threshold()
    t0, t1 = float(t_span[0]), float(t_span[1])
    if t1 <= t0:
        return Tc_init.copy()

    xi = None
    try:
        y, ok, message = _bdf_flow(system, xi0.ravel(), t0, t1, rtol, atol, stats)
        if ok and np.all(np.isfinite(y)):
            xi = sliding.snap(y.reshape(-1, 2))
            if _min_det(xi, Tc_init.triangles) <= threshold:
                logger.warning("BDF xi-flow tangled the computational mesh; retrying explicitly")
                xi = None
        else:
            logger.warning("BDF xi-flow failed (%s); retrying explicitly", message)
    except (FloatingPointError, ValueError, np.linalg.LinAlgError) as exc:
        logger.warning("BDF xi-flow raised %r; retrying explicitly", exc)

    if xi is None:
        if stats is not None:
            stats["xi_fallbacks"] = stats.get("xi_fallbacks", 0) + 1
        xi = sliding.snap(_explicit_flow(system, xi0, (t0, t1), threshold))
        if _min_det(xi, Tc_init.triangles) <= threshold:
            raise MeshTangled("computational mesh tangled after boundary snapping")
    return Tc_init.with_vertices(xi)


def rebuild_physical(Tc_new: TriangleMesh, Th_tilde: TriangleMesh, Tc_ref: TriangleMesh) -> TriangleMesh:
    """Map the reference computational vertices through ``Tc_new -> Th_tilde``.

    Interior vertices are located in ``Tc_new`` and mapped barycentrically;
    reference vertices outside ``Tc_new`` are projected onto the nearest
    element with a warning.  Boundary vertices are mapped by the restriction
    of the same piecewise-linear map to each boundary loop: the arc-length
    position of a reference boundary vertex among the (slid) computational
    boundary vertices is interpolated linearly between the corresponding
    ``Th_tilde`` boundary vertices.  Without sliding this returns the
    ``Th_tilde`` boundary unchanged; with sliding the physical boundary
    vertices follow along the current boundary polygon, which keeps the
    boundary layer of elements consistent with the interior.
    """
    ni = Tc_ref.n_interior
    elem, bary, outside = locate_points(Tc_new, Tc_ref.vertices[:ni], project=True)
    if len(outside):
        logger.warning("%d reference vertices fell outside the computational mesh; projected", len(outside))
    corners = Th_tilde.vertices[Tc_new.triangles[elem]]
    x = Th_tilde.vertices.copy()
    x[:ni] = np.einsum("ij,ijk->ik", bary, corners)
    for loop in Tc_ref.boundary_loops:
        poly = Tc_ref.vertices[loop]
        seg = np.linalg.norm(np.roll(poly, -1, axis=0) - poly, axis=1)
        s_ref = np.concatenate([[0.0], np.cumsum(seg)[:-1]])
        _, s_new = _polygon_feet(Tc_new.vertices[loop], poly)
        if np.allclose(s_new, s_ref, rtol=0.0, atol=1e-14 * seg.sum()):
            continue
        target = Th_tilde.vertices[loop]
        for k in range(2):
            x[loop, k] = np.interp(s_ref, s_new, target[:, k], period=seg.sum())
    return Th_tilde.with_vertices(x)


def move_mesh(Th_tilde, metric, params, reference, t_span, sliding=None, rtol=1e-6, atol=1e-8, stats=None):
    """One full mesh-movement step: xi-flow from the reference, then rebuild."""
    Tc_new = integrate_xi(reference, Th_tilde, metric, params, t_span, rtol, atol, sliding, stats)
    Th_new = rebuild_physical(Tc_new, Th_tilde, reference)
    try:
        Th_new.check_areas("new physical mesh")
    except NonPositiveArea as exc:
        raise MeshTangled(str(exc)) from exc
    return Th_new, Tc_new
