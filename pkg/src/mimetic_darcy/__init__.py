"""Mixed mimetic spectral element discretization of 2D Darcy flow."""

from .assembly import (
    SaddleSystem,
    assemble,
    mass_matrix_flux,
    mass_matrix_volume,
    source_functional,
)
from .basis import BasisSet, edge_eval, lagrange_deriv, lagrange_eval, tabulate
from .errors import (
    IllPosedProblemError,
    MimeticError,
    QuadratureError,
    SingularMaterialError,
    SolverError,
    UsageError,
)
from .mesh import DofMap, Mesh, build_mesh, map_to_physical, reconstruct
from .problem import (
    FluxBC,
    PermeabilityField,
    PressureBC,
    ProblemSpec,
    QuadratureSettings,
)
from .quadrature import QuadratureRule, gll_rule, legendre_eval
from .solver import SolutionFields, solve_saddle, velocity_from_flux
from .topology import IncidenceMatrix, incidence_div
from .verification import (
    ConvergenceReport,
    convergence_study,
    l2_error,
    layered_case,
    manufactured_case,
    run_case,
)

__version__ = "0.1.0"
