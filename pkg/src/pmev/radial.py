"""Radially symmetric reference solutions by front fixing.

For radially symmetric data the pressure equation reduces to

    v_t = m v (v_rr + v_r / r) + v_r**2,   0 <= r < s(t),   v(s(t), t) = 0,

with the front following Darcy's law ``s' = -v_r(s)``.  In the scaled
coordinate ``rho = r / s(t)`` the domain is fixed to ``[0, 1]``; the
resulting method-of-lines system (second-order central differences, a
second-order one-sided front slope) is integrated with scipy's BDF.  This
gives a fine-grid, independent reference for the 2D solver, e.g. the
boundary motion of the waiting-time example.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.integrate import solve_ivp


@dataclass
class RadialSolution:
    t: np.ndarray  # (n_t,)
    front: np.ndarray  # (n_t,), s(t)
    rho: np.ndarray  # (n + 1,), scaled radius r / s(t)
    v: np.ndarray  # (n_t, n + 1), pressure at rho * front


def _rhs(m, rho, h):
    inv_rho = np.zeros_like(rho)
    inv_rho[1:] = 1.0 / rho[1:]

    def rhs(t, y):
        s = y[-1]
        v = np.append(y[:-1], 0.0)
        vr = np.zeros_like(v)
        lap = np.empty_like(v)
        vr[1:-1] = (v[2:] - v[:-2]) / (2 * h)
        lap[1:-1] = (v[2:] - 2 * v[1:-1] + v[:-2]) / h**2 + vr[1:-1] * inv_rho[1:-1]
        lap[0] = 4 * (v[1] - v[0]) / h**2  # v_rr + v_r / r -> 2 v_rr on the axis
        sdot = -(3 * v[-1] - 4 * v[-2] + v[-3]) / (2 * h) / s
        dv = (m * v * lap + vr**2) / s**2 + rho * sdot * vr / s
        return np.append(dv[:-1], sdot)

    return rhs


def _sparsity(n):
    k = n + 1  # n interior/axis values plus the front
    pattern = sparse.lil_matrix((k, k), dtype=bool)
    for i in range(n):
        pattern[i, max(i - 1, 0) : min(i + 2, n)] = True
        pattern[i, n - 2 : n] = True  # the front speed enters every row
        pattern[i, n] = True
    pattern[n, n - 2 : n + 1] = True
    return pattern.tocsr()


def radial_front(v0, s0, m, t_span, t_eval=None, n=800, rtol=1e-9, atol=1e-12) -> RadialSolution:
    """Solve the radial pressure equation from ``v0(r)`` on ``[0, s0]``.

    Parameters
    ----------
    v0 : callable
        Initial pressure as a function of the radius (vectorized).
    s0 : float
        Initial front radius; ``v0(s0)`` is taken as zero.
    m : float
        Exponent.
    t_span : (float, float)
        Integration interval.
    t_eval : array_like, optional
        Output times (default: the end of ``t_span``).
    n : int
        Number of grid intervals in ``rho``.
    """
    rho = np.linspace(0.0, 1.0, n + 1)
    y0 = np.append(np.asarray(v0(rho * s0), dtype=float)[:-1], s0)
    t_eval = [t_span[1]] if t_eval is None else t_eval
    sol = solve_ivp(
        _rhs(float(m), rho, rho[1]),
        t_span,
        y0,
        method="BDF",
        t_eval=t_eval,
        rtol=rtol,
        atol=atol,
        jac_sparsity=_sparsity(n),
    )
    if sol.status != 0:
        raise RuntimeError(f"radial reference integration failed: {sol.message}")
    v = np.column_stack([sol.y[:-1].T, np.zeros(len(sol.t))])
    return RadialSolution(sol.t, sol.y[-1], rho, v)
