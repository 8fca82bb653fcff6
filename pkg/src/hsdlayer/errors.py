"""Exception types shared across the package."""


class LPError(Exception):
    """Base class for all errors raised by hsdlayer."""


class StructuralError(LPError, ValueError):
    """Problem data has inconsistent shapes or invalid values."""


class RankDeficient(LPError):
    """The equality matrix does not have full row rank after presolve."""


class InfeasibleError(LPError):
    """The problem (or a discrete oracle instance) has no feasible point.

    ``kind`` is ``"infeasible"``, ``"unbounded"`` or ``"infeasible_or_unbounded"``.
    """

    def __init__(self, message, kind="infeasible"):
        super().__init__(message)
        self.kind = kind


class NumericalFailure(LPError):
    """A linear solve failed even after Tikhonov damping retries."""


class Unconverged(LPError):
    """The iteration limit was hit before the lambda cut-off was reached.

    The best iterate found so far is attached as ``solution``.
    """

    def __init__(self, message, solution=None):
        super().__init__(message)
        self.solution = solution
