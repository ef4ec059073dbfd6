"""Closed-form solutions, initial data and error norms.

The Barenblatt-Pattle solution in pressure form is

    v(r, t) = (1 - (r / (r0 lam))^2)_+ / (m lam^(d m)),
    lam(t) = (t / t0)^(1 / (2 + d m)),   t0 = r0^2 m / (2 (2 + d m)).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .quadrature import DEG6, physical_points

NEG_CLAMP = 1e-12

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class BpParams:
    m: float = 2.0
    r0: float = 0.5
    d: int = 2

    def __post_init__(self):
        if self.m < 1:
            raise ValueError("m must be >= 1")
        if self.r0 <= 0:
            raise ValueError("r0 must be positive")

    @property
    def t0(self):
        return self.r0**2 * self.m / (2 * (2 + self.d * self.m))

    @property
    def exponent(self):
        return 1.0 / (2 + self.d * self.m)

    def lam(self, t):
        return (np.asarray(t, dtype=float) / self.t0) ** self.exponent

    def dlam(self, t):
        return self.exponent * self.lam(t) / np.asarray(t, dtype=float)


def bp_value(x, t, p: BpParams):
    """Pressure ``v`` at points ``x`` (shape ``(..., 2)``) and time ``t >= t0``."""
    x = np.asarray(x, dtype=float)
    lam = p.lam(t)
    r2 = np.sum(x * x, axis=-1)
    s = 1.0 - r2 / (p.r0 * lam) ** 2
    return np.where(s > 0, s, 0.0) / (p.m * lam ** (p.d * p.m))


def bp_gradient(x, t, p: BpParams):
    x = np.asarray(x, dtype=float)
    lam = p.lam(t)
    R = p.r0 * lam
    inside = np.sum(x * x, axis=-1) < R**2
    g = -2.0 * x / (R**2 * p.m * lam ** (p.d * p.m))
    return np.where(inside[..., None], g, 0.0)


def bp_radial_derivative(r, t, p: BpParams):
    lam = p.lam(t)
    return -2.0 * r / ((p.r0 * lam) ** 2 * p.m * lam ** (p.d * p.m))


def bp_boundary_radius(t, p: BpParams):
    return p.r0 * p.lam(t)


def bp_boundary_speed(t, p: BpParams):
    return p.r0 * p.dlam(t)


def ic_waiting(x, m=2.0):
    """``cos^m(|x|) / m`` inside ``|x| <= pi/2``, zero outside."""
    x = np.asarray(x, dtype=float)
    r = np.sqrt(np.sum(x * x, axis=-1))
    c = np.cos(np.minimum(r, np.pi / 2))
    return np.where(r <= np.pi / 2, np.maximum(c, 0.0) ** m / m, 0.0)


def ic_complex(x):
    """Partial-donut initial pressure: a 3/4 annulus capped by two half disks."""
    x = np.asarray(x, dtype=float)
    X, Y = x[..., 0], x[..., 1]
    r = np.sqrt(X * X + Y * Y)
    a2 = 0.25**2
    out = np.zeros(np.shape(X))
    band = (r >= 0.5) & (r <= 1.0) & ((X < 0) | (Y < 0))
    cap_y = (X * X + (Y - 0.75) ** 2 <= a2) & (X >= 0)
    cap_x = ((X - 0.75) ** 2 + Y * Y <= a2) & (Y >= 0)
    out = np.where(band, 25.0 * np.maximum(a2 - (r - 0.75) ** 2, 0.0) ** 1.5, out)
    out = np.where(cap_y, 25.0 * np.maximum(a2 - X * X - (Y - 0.75) ** 2, 0.0) ** 1.5, out)
    out = np.where(cap_x, 25.0 * np.maximum(a2 - (X - 0.75) ** 2 - Y * Y, 0.0) ** 1.5, out)
    return out


def in_complex_support(x, tol=1e-10):
    """Membership in one of the three support pieces of :func:`ic_complex`."""
    x = np.asarray(x, dtype=float)
    X, Y = x[..., 0], x[..., 1]
    r = np.sqrt(X * X + Y * Y)
    band = (r >= 0.5 - tol) & (r <= 1.0 + tol) & ((X < tol) | (Y < tol))
    cap_y = (np.sqrt(X * X + (Y - 0.75) ** 2) <= 0.25 + tol) & (X >= -tol)
    cap_x = (np.sqrt((X - 0.75) ** 2 + Y * Y) <= 0.25 + tol) & (Y >= -tol)
    return band | cap_y | cap_x


def u_from_v(v, m, tol=NEG_CLAMP):
    """Density ``u = (m v)^(1/m)``; values in ``(-tol, 0)`` are treated as zero."""
    v = np.asarray(v, dtype=float)
    if np.any(v < -tol):
        raise ValueError(f"negative pressure {v.min():.3e} below clamp tolerance {tol:.1e}")
    return (m * np.maximum(v, 0.0)) ** (1.0 / m)


def v_from_u(u, m):
    return np.asarray(u, dtype=float) ** m / m


def error_norms(mesh, v_h, t, p: BpParams, rule=DEG6):
    """L1/L2 errors in ``v`` and ``u`` plus the max boundary-radius error.

    Integrals run over the computed mesh with a degree-6 rule; the exact
    solution is evaluated at the physical quadrature points (zero outside
    its support).  The computed ``u`` is the piecewise linear field with
    nodal values ``(m v_j)^(1/m)``.
    """
    bary, w = rule
    v_h = np.asarray(v_h, dtype=float)
    areas = mesh.signed_areas()
    vq = v_h[mesh.triangles] @ bary.T
    xq = physical_points(mesh.vertices, mesh.triangles, bary)
    ve = bp_value(xq, t, p)
    tol = max(NEG_CLAMP, 1e-6 * max(float(v_h.max()), 0.0))
    ue = u_from_v(ve, p.m)
    try:
        uq = u_from_v(v_h, p.m, tol)[mesh.triangles] @ bary.T
    except ValueError as exc:
        logger.warning("u errors undefined: %s", exc)
        uq = np.full_like(vq, np.nan)

    def norms(a, b):
        diff = np.abs(a - b)
        l1 = float(np.sum(areas * (diff @ w)))
        l2 = float(np.sqrt(np.sum(areas * ((diff * diff) @ w))))
        return l1, l2

    l1v, l2v = norms(vq, ve)
    l1u, l2u = norms(uq, ue)
    rb = np.linalg.norm(mesh.vertices[mesh.n_interior :], axis=1)
    linf_b = float(np.max(np.abs(rb - bp_boundary_radius(t, p)))) if len(rb) else 0.0
    return {"L1_v": l1v, "L2_v": l2v, "L1_u": l1u, "L2_u": l2u, "Linf_b": linf_b}
