"""Moving-mesh finite elements for the porous medium equation in pressure form."""

from .driver import ConvergenceTable, RunReport, SimulationConfig, convergence_study, run_simulation
from .exact import BpParams
from .mesh import TriangleMesh

__version__ = "0.1.0"

__all__ = [
    "BpParams",
    "ConvergenceTable",
    "RunReport",
    "SimulationConfig",
    "TriangleMesh",
    "convergence_study",
    "run_simulation",
]
