"""Exception types raised across the solver pipeline."""


class STGFDMError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(STGFDMError, ValueError):
    pass


# geometry
class EmptySubdomain(STGFDMError):
    pass


class InterfaceSamplingFailed(STGFDMError):
    pass


class DegenerateGradient(STGFDMError):
    pass


# stencil
class InsufficientNeighbors(STGFDMError):
    pass


class SingularMomentMatrix(STGFDMError):
    pass


# assembly
class MissingStar(STGFDMError):
    pass


class InconsistentNormal(STGFDMError):
    pass


class ShapeMismatch(STGFDMError):
    pass


class LengthMismatch(STGFDMError, ValueError):
    pass


# solver
class SingularSystem(STGFDMError):
    pass


class NoConvergence(STGFDMError):
    def __init__(self, message, best_residual=float("nan"), solution=None):
        super().__init__(message)
        self.best_residual = best_residual
        self.solution = solution


# problems
class UnknownExample(STGFDMError, KeyError):
    pass


class SideMismatch(STGFDMError):
    pass


class NotOnInterface(STGFDMError):
    pass


# postprocess
class MissingValues(STGFDMError):
    pass


class NonPositiveError(STGFDMError, ValueError):
    pass


NUMERICAL_ERRORS = (
    EmptySubdomain,
    InterfaceSamplingFailed,
    DegenerateGradient,
    InsufficientNeighbors,
    SingularMomentMatrix,
    MissingStar,
    InconsistentNormal,
    ShapeMismatch,
    SingularSystem,
    NoConvergence,
)
