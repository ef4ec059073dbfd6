"""Solution-driven metric tensor concentrating elements where ``v`` is small."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

logger = logging.getLogger(__name__)

DEFAULT_FLOOR = 1e-5


@dataclass
class MetricField:
    """Isotropic per-element metric ``M_K = scale[K] * I``.

    ``vertex_scale`` holds the same expression evaluated at the vertices; the
    mesh equation needs ``det M`` at vertices for its balancing factor.
    """

    scale: np.ndarray
    vertex_scale: np.ndarray
    floor: float = DEFAULT_FLOOR

    @property
    def tensors(self):
        return self.scale[:, None, None] * np.eye(2)

    def sqrt_det(self):
        return self.scale

    def scaled(self, c):
        """The metric ``c * M``."""
        return MetricField(c * self.scale, c * self.vertex_scale, self.floor)


def metric_density(v, floor=DEFAULT_FLOOR):
    """``1 / sqrt(v^2 + floor)`` evaluated pointwise."""
    v = np.asarray(v, dtype=float)
    return 1.0 / np.sqrt(v * v + floor)


def build_metric(mesh, v, floor=DEFAULT_FLOOR) -> MetricField:
    """Element-averaged metric from nodal values ``v`` (vertex mean of the density)."""
    if floor <= 0:
        raise ValueError("metric floor must be positive")
    if floor > 1e-2 or floor < 1e-9:
        logger.warning("metric floor %.1e is outside [1e-9, 1e-2]; mesh concentration will suffer", floor)
    v = np.asarray(v, dtype=float)
    if v.shape != (mesh.n_vertices,):
        raise ValueError(f"v has shape {v.shape}, mesh has {mesh.n_vertices} vertices")
    cv = metric_density(v, floor)
    return MetricField(cv[mesh.triangles].mean(axis=1), cv, floor)


def sigma_h(mesh, metric: MetricField) -> float:
    """Total metric volume ``sum_K |K| sqrt(det M_K)``."""
    return float(np.sum(mesh.signed_areas() * metric.sqrt_det()))


def equidistribution_cv(mesh, metric: MetricField) -> float:
    """Coefficient of variation of the element metric volumes ``|K| sqrt(det M_K)``."""
    w = mesh.signed_areas() * metric.sqrt_det()
    return float(w.std() / w.mean())
