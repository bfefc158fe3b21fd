"""Exception hierarchy.

Two families matter to callers: :class:`InputError` (bad data or arguments)
and :class:`SolverError` (numerical routines that could not finish). The CLI
maps them to distinct exit codes.
"""


class ChoreEqError(Exception):
    """Base class for every error raised by this package."""


class InputError(ChoreEqError, ValueError):
    pass


class SolverError(ChoreEqError, RuntimeError):
    pass


# input side
class ParseError(InputError):
    pass


class ValidationError(InputError):
    pass


class InfiniteDisutility(ValidationError):
    """A coefficient was infinite or NaN."""


class DimensionMismatch(InputError):
    pass


class NegativeInput(InputError):
    pass


class ParameterError(InputError):
    """Solver tolerances violate the required ordering."""


class InvalidRange(InputError):
    pass


class GridTooLarge(InputError):
    pass


class UnsupportedDims(InputError):
    pass


class ZeroPrices(InputError):
    pass


class ZeroColumn(InputError):
    pass


class NonpositiveEntry(InputError):
    pass


# numerical side
class GradientSingularity(SolverError):
    pass


class SolverStall(SolverError):
    pass


class DegenerateDirection(SolverError):
    pass


class ZeroNormalEntry(SolverError):
    pass


class InfeasibleRecovery(SolverError):
    pass


class SearchFailed(SolverError):
    pass


class IterationCapExceeded(SolverError):
    """Raised when the outer loop hits ``max_iters``.

    The rows recorded so far are kept on ``trace`` so callers can still
    write a partial trace file.
    """

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = list(trace or [])
