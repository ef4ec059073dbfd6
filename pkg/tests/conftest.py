import numpy as np
import pytest

from pmev.mesh import TriangleMesh
from pmev.meshgen import disk_mesh


def square_with_center():
    """Unit square split into four triangles around its center."""
    x = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0], [0.5, 0.5]])
    t = np.array([[0, 1, 4], [1, 2, 4], [2, 3, 4], [3, 0, 4]])
    return TriangleMesh.from_arrays(x, t)


def structured_square(n, jitter=0.0, seed=0):
    """``n x n`` grid of the unit square, each cell cut along a diagonal."""
    g = np.linspace(0.0, 1.0, n + 1)
    X, Y = np.meshgrid(g, g, indexing="ij")
    x = np.column_stack([X.ravel(), Y.ravel()])
    idx = np.arange((n + 1) ** 2).reshape(n + 1, n + 1)
    a, b = idx[:-1, :-1].ravel(), idx[1:, :-1].ravel()
    c, d = idx[1:, 1:].ravel(), idx[:-1, 1:].ravel()
    tri = np.vstack([np.column_stack([a, b, c]), np.column_stack([a, c, d])])
    if jitter:
        rng = np.random.default_rng(seed)
        inner = (x[:, 0] > 0) & (x[:, 0] < 1) & (x[:, 1] > 0) & (x[:, 1] < 1)
        x[inner] += jitter / n * rng.uniform(-1, 1, (inner.sum(), 2))
    return TriangleMesh.from_arrays(x, tri)


@pytest.fixture
def square():
    return square_with_center()


@pytest.fixture(scope="session")
def disk():
    return disk_mesh(0.5, 8)
