"""Exception hierarchy shared by every module."""


class PostRatioError(Exception):
    """Base class for all library errors."""


class InvalidInputError(PostRatioError, ValueError):
    """Shapes, dimensions or parameter values are not acceptable."""


class DegenerateInputError(PostRatioError, ValueError):
    """Input is well-formed but carries no usable variation (e.g. a constant window)."""


class DegenerateEvidenceError(PostRatioError, ArithmeticError):
    """Every likelihood underflowed, so the estimated evidence is zero."""


class InvalidBlackboxError(PostRatioError, ValueError):
    """A black-box classifier returned NaN or a value outside [0, 1]."""


class SolverFailureError(PostRatioError, ArithmeticError):
    """The optimizer produced a non-finite objective."""


class SingularInformationError(PostRatioError, ArithmeticError):
    """The Hessian at the optimum is numerically singular."""


class InfeasibleConstraintError(PostRatioError, ValueError):
    """The moment constraint of the dual program cannot be met."""

    def __init__(self, message, gap=None):
        super().__init__(message)
        self.gap = gap


class DataFileError(PostRatioError, ValueError):
    """A CSV/JSON input file could not be parsed."""

    def __init__(self, message, path=None, row=None):
        super().__init__(message)
        self.path = path
        self.row = row
