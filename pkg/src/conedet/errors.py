"""Exception hierarchy shared by all conedet modules."""


class ConeDetError(Exception):
    """Base class for every error raised by conedet."""


class InvalidMetric(ConeDetError, ValueError):
    pass


class EvaluationAtSingularity(ConeDetError, ValueError):
    pass


class InvalidChart(ConeDetError, ValueError):
    pass


class NonConvergentQuadrature(ConeDetError, RuntimeError):
    pass


class InvalidRationalMap(ConeDetError, ValueError):
    pass


class NonSimpleCriticalPoint(InvalidRationalMap):
    pass


class CriticalValueAtInfinity(InvalidRationalMap):
    pass


class CriticalValueAtConePoint(InvalidRationalMap):
    pass


class RootFindingFailure(ConeDetError, RuntimeError):
    pass


class DegenerateModuli(ConeDetError, ValueError):
    pass


class EvaluationAtConePoint(ConeDetError, ValueError):
    pass


class SeriesInversionFailure(ConeDetError, ArithmeticError):
    pass


class ConePointsTooClose(ConeDetError, ValueError):
    pass


class QualityFailure(ConeDetError, RuntimeError):
    pass


class MeshFormatError(ConeDetError, ValueError):
    pass


class QuadratureFailure(ConeDetError, RuntimeError):
    pass


class ConvergenceFailure(ConeDetError, RuntimeError):
    def __init__(self, message, n_converged=0):
        super().__init__(message)
        self.n_converged = n_converged


class SolverFailure(ConeDetError, RuntimeError):
    pass


class CutoffOverlap(ConeDetError, ValueError):
    pass


class RadiusOutsideSeriesDisk(ConeDetError, ValueError):
    pass


class IllConditionedFit(ConeDetError, ArithmeticError):
    pass


class LogTermDetected(ConeDetError, ArithmeticError):
    pass


class TailDominatedError(ConeDetError, ValueError):
    pass


class GroupTrackingFailure(ConeDetError, RuntimeError):
    pass


class ConfigError(ConeDetError, ValueError):
    pass
