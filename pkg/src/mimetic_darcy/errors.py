"""Exception hierarchy shared by the solver modules."""


class MimeticError(Exception):
    """Base class for all errors raised by this package."""


class UsageError(MimeticError, ValueError):
    """Invalid arguments: out-of-range indices, bad counts, length mismatches."""


class QuadratureError(MimeticError, RuntimeError):
    """Root finding for quadrature nodes did not converge."""


class SingularMaterialError(MimeticError):
    """The permeability tensor is not invertible (or not SPD) at some point."""

    def __init__(self, message: str, point=None):
        super().__init__(message)
        self.point = point


class IllPosedProblemError(MimeticError):
    """Boundary data incompatible with the source (all-flux boundary)."""


class SolverError(MimeticError):
    """Factorization breakdown of the saddle-point matrix."""

    def __init__(self, message: str, pivot: int | None = None):
        super().__init__(message)
        self.pivot = pivot
