"""Exception hierarchy shared by all modules."""


class SplittingError(Exception):
    """Base class for every error raised by daesplit.

    Integration drivers set ``t`` to the start of the failing step.
    """

    t = None


class DimensionMismatch(SplittingError, ValueError):
    pass


class SingularMatrix(SplittingError, ArithmeticError):
    """A pivot fell below the singularity threshold."""


class NotSPD(SplittingError, ValueError):
    pass


class EvaluationFailure(SplittingError, ArithmeticError):
    """A model function returned non-finite values."""


class NewtonDivergence(SplittingError, ArithmeticError):
    pass


class CouplingViolation(SplittingError, ValueError):
    pass


class StillSingular(SplittingError, ArithmeticError):
    """E + eps*I could not be factorized."""


class StructureViolation(SplittingError, ValueError):
    pass


class FileFormat(SplittingError, ValueError):
    pass


class MissingOutputs(SplittingError, ValueError):
    pass


class GridMismatch(SplittingError, ValueError):
    pass


class DegenerateData(SplittingError, ValueError):
    pass


class ReferenceNotConverged(SplittingError, AssertionError):
    """Reference solution is not accurate enough to measure orders against."""
