"""Three-stage Radau IIA (order 5) for ``B(t) y' = f(t, y)`` with sparse ``B``.

Follows the classical implementation of Hairer & Wanner (RADAU5): the
simplified Newton iteration is decoupled into one real and one complex
linear system through the eigen-decomposition of the inverse Butcher
matrix, and the error is estimated with the embedded third-order formula.
Unlike ``scipy.integrate.Radau`` a time-dependent mass matrix is supported;
each stage residual uses the mass matrix at its own stage time.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import csc_matrix
from scipy.sparse.linalg import splu

from .errors import NewtonDivergence

logger = logging.getLogger(__name__)

S6 = 6**0.5
C = np.array([(4 - S6) / 10, (4 + S6) / 10, 1.0])
A = np.array(
    [
        [(88 - 7 * S6) / 360, (296 - 169 * S6) / 1800, (-2 + 3 * S6) / 225],
        [(296 + 169 * S6) / 1800, (88 + 7 * S6) / 360, (-2 - 3 * S6) / 225],
        [(16 - S6) / 36, (16 + S6) / 36, 1 / 9],
    ]
)
A_INV = np.linalg.inv(A)
E = np.array([-13 - 7 * S6, -13 + 7 * S6, -1]) / 3
MU_REAL = 3 + 3 ** (2 / 3) - 3 ** (1 / 3)
MU_COMPLEX = 3 + 0.5 * (3 ** (1 / 3) - 3 ** (2 / 3)) - 0.5j * (3 ** (5 / 6) + 3 ** (7 / 6))
T = np.array(
    [
        [0.09443876248897524, -0.14125529502095421, 0.03002919410514742],
        [0.25021312296533332, 0.20412935229379994, -0.38294211275726192],
        [1, 1, 0],
    ]
)
TI = np.array(
    [
        [4.17871859155190428, 0.32768282076106237, 0.52337644549944951],
        [-4.17871859155190428, -0.32768282076106237, 0.47662355450055044],
        [0.50287263494578682, -2.57192694985560522, 0.59603920482822492],
    ]
)

# dense output: y(t_old + x h) = y_old + Z^T P [x, x^2, x^3]
P = np.array(
    [
        [13 / 3 + 7 * S6 / 3, -23 / 3 - 22 * S6 / 3, 10 / 3 + 5 * S6],
        [13 / 3 - 7 * S6 / 3, -23 / 3 + 22 * S6 / 3, 10 / 3 - 5 * S6],
        [1 / 3, -8 / 3, 10 / 3],
    ]
)

NEWTON_MAXITER = 6
MIN_FACTOR = 0.2
MAX_FACTOR = 10.0
MAX_HALVINGS = 10
EPS = np.finfo(float).eps


@dataclass
class RadauStats:
    steps: int = 0
    rejected: int = 0
    newton_failures: int = 0
    nfev: int = 0
    njev: int = 0
    nlu: int = 0
    last_step: float | None = None
    extra: dict = field(default_factory=dict)


def _rms(x):
    return float(np.linalg.norm(x) / np.sqrt(x.size)) if x.size else 0.0


def _predict_factor(h, h_old, err, err_old):
    if err_old is None or h_old is None or err == 0:
        mult = 1.0
    else:
        mult = h / h_old * (err_old / err) ** 0.25
    with np.errstate(divide="ignore"):
        return min(1.0, mult) * err**-0.25


def integrate(fun, mass, jac, t_span, y0, rtol=1e-6, atol=1e-8, first_step=None, stats=None):
    """Integrate ``mass(t) @ y' = fun(t, y)`` from ``t_span[0]`` to ``t_span[1]``.

    ``mass(t)`` and ``jac(t, y)`` return sparse matrices.  Raises
    :class:`NewtonDivergence` after ``MAX_HALVINGS`` consecutive step
    halvings caused by failed Newton iterations.
    """
    t, t_end = float(t_span[0]), float(t_span[1])
    y = np.array(y0, dtype=float)
    n = y.size
    stats = stats if stats is not None else RadauStats()
    if n == 0 or t_end <= t:
        return y, stats

    newton_tol = max(10 * EPS / rtol, min(0.03, rtol**0.5))
    h = t_end - t if first_step is None else min(first_step, t_end - t)
    h_old = err_old = None
    halvings = 0
    span = t_end - t
    dense = None  # (t_old, h_old, y_old, Q) of the last accepted step

    while t < t_end:
        h = min(h, t_end - t)
        if t_end - (t + h) < 1e-12 * span:
            h = t_end - t
        B0 = mass(t)
        f0 = fun(t, y)
        J = csc_matrix(jac(t, y))
        stats.nfev += 1
        stats.njev += 1

        while True:
            Bbar = mass(t + h)
            lu_real = splu(csc_matrix(MU_REAL / h * Bbar - J))
            lu_cplx = splu(csc_matrix(MU_COMPLEX / h * Bbar.astype(complex) - J))
            stats.nlu += 2
            Bs = [mass(t + C[i] * h) for i in range(3)]
            scale = atol + np.abs(y) * rtol
            if dense is None:
                Z = np.zeros((3, n))
            else:
                # extrapolate the previous collocation polynomial to the new stages
                t_prev, h_prev, y_prev, Q = dense
                x = (t + h * C - t_prev) / h_prev
                Z = (Q @ np.vstack([x, x**2, x**3])).T + (y_prev - y)
            W = TI @ Z
            F = np.empty((3, n))
            converged = False
            dW_norm_old = rate = None
            for k in range(NEWTON_MAXITER):
                for i in range(3):
                    F[i] = fun(t + C[i] * h, y + Z[i])
                stats.nfev += 3
                if not np.all(np.isfinite(F)):
                    break
                AZ = A_INV @ Z / h
                R = F - np.stack([Bs[i] @ AZ[i] for i in range(3)])
                Rt = TI @ R
                dW = np.empty_like(W)
                dW[0] = lu_real.solve(Rt[0])
                dc = lu_cplx.solve(Rt[1] + 1j * Rt[2])
                dW[1] = dc.real
                dW[2] = dc.imag
                dW_norm = _rms(dW / scale)
                if dW_norm_old is not None:
                    rate = dW_norm / dW_norm_old
                if rate is not None and (rate >= 1 or rate ** (NEWTON_MAXITER - k) / (1 - rate) * dW_norm > newton_tol):
                    break
                W += dW
                Z = T @ W
                if dW_norm == 0 or (rate is not None and rate / (1 - rate) * dW_norm < newton_tol):
                    converged = True
                    break
                dW_norm_old = dW_norm

            if not converged:
                stats.newton_failures += 1
                halvings += 1
                if halvings > MAX_HALVINGS:
                    raise NewtonDivergence(f"Radau Newton iteration failed {halvings} times near t={t:.6g} (h={h:.3e})")
                h *= 0.5
                h_old = err_old = None
                continue

            y_new = y + Z[-1]
            ZE = (Z.T @ E) / h
            rhs_err = B0 @ ZE
            err = lu_real.solve(f0 + rhs_err)
            scale = atol + np.maximum(np.abs(y), np.abs(y_new)) * rtol
            err_norm = _rms(err / scale)
            safety = 0.9 * (2 * NEWTON_MAXITER + 1) / (2 * NEWTON_MAXITER + k + 1)
            if err_norm > 1:
                err = lu_real.solve(fun(t, y + err) + rhs_err)
                stats.nfev += 1
                err_norm = _rms(err / scale)
            if err_norm > 1:
                stats.rejected += 1
                factor = _predict_factor(h, h_old, err_norm, err_old)
                h *= max(MIN_FACTOR, safety * factor)
                continue
            break

        halvings = 0
        stats.steps += 1
        dense = (t, h, y, Z.T @ P)
        t = t_end if h == t_end - t else t + h
        y = y_new
        factor = min(MAX_FACTOR, safety * _predict_factor(h, h_old, err_norm, err_old))
        h_old, err_old = h, err_norm
        stats.last_step = h
        h *= factor
    return y, stats
