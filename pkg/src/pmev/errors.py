"""Exception hierarchy shared across the solver."""


class PMEError(RuntimeError):
    """Base class for solver failures that abort a run."""

    exit_code = 1


class NonPositiveArea(PMEError):
    """An element has (numerically) nonpositive signed area."""

    exit_code = 2

    def __init__(self, message, elements=None):
        super().__init__(message)
        self.elements = elements


class MeshTangled(PMEError):
    exit_code = 2


class PointNotFound(PMEError, LookupError):
    """A query point lies outside the mesh beyond the location tolerance."""


class BoundaryCollision(PMEError):
    """A boundary loop self-intersects (e.g. a hole closing)."""

    exit_code = 3


class NewtonDivergence(PMEError):
    exit_code = 4


class GenerationFailure(PMEError):
    pass
