"""Symmetric quadrature rules on the reference triangle.

Points are barycentric triples; weights sum to one (multiply by |K|).
"""

import numpy as np


def _orbit3(a, b):
    return [(a, b, b), (b, a, b), (b, b, a)]


def _orbit6(a, b, c):
    return [(a, b, c), (a, c, b), (b, a, c), (b, c, a), (c, a, b), (c, b, a)]


def _rule(groups):
    pts, wts = [], []
    for w, orbit in groups:
        pts.extend(orbit)
        wts.extend([w] * len(orbit))
    return np.array(pts), np.array(wts)


# degree 4, 6 points (Dunavant)
DEG4 = _rule(
    [
        (0.223381589678011, _orbit3(0.108103018168070, 0.445948490915965)),
        (0.109951743655322, _orbit3(0.816847572980459, 0.091576213509771)),
    ]
)

# degree 6, 12 points (Dunavant)
DEG6 = _rule(
    [
        (0.116786275726379, _orbit3(0.501426509658179, 0.249286745170910)),
        (0.050844906370207, _orbit3(0.873821971016996, 0.063089014491502)),
        (0.082851075618374, _orbit6(0.053145049844817, 0.310352451033784, 0.636502499121399)),
    ]
)


def physical_points(vertices, triangles, bary):
    """Quadrature points for every element, shape ``(N, q, 2)``."""
    x = vertices[triangles]
    return np.einsum("qa,kad->kqd", bary, x)
