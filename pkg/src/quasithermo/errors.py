"""Exception hierarchy shared by all modules.

Every numerical failure derives from :class:`NumericalFailure` so the CLI can
map it to a single exit status; configuration problems derive from
:class:`ConfigError`.
"""


class QuasithermoError(Exception):
    """Base class for package errors."""


class ConfigError(QuasithermoError):
    def __init__(self, message: str, field: str | None = None, line: int | None = None):
        self.field = field
        self.line = line
        where = []
        if field is not None:
            where.append(f"field '{field}'")
        if line is not None:
            where.append(f"line {line}")
        super().__init__(f"{message} ({', '.join(where)})" if where else message)


class NumericalFailure(QuasithermoError):
    """Base class for failures raised by numerical kernels."""


# series
class NonPositiveLeadingCoefficient(NumericalFailure, ValueError):
    pass


# manifold
class NewtonDivergence(NumericalFailure):
    pass


class DegenerateHessian(NumericalFailure):
    pass


class DomainError(NumericalFailure, ValueError):
    pass


# asymptotics
class QuadratureNonConvergence(NumericalFailure):
    pass


class MultipleStationaryPoints(NumericalFailure):
    def __init__(self, message: str, points=None):
        self.points = points
        super().__init__(message)


# cumulants
class StepUnderflow(NumericalFailure):
    pass


class NonNormalizedDensity(NumericalFailure, ValueError):
    pass


# evolution
class DomainExit(NumericalFailure):
    pass


class DivergentNormalization(NumericalFailure):
    pass


class CFLViolation(NumericalFailure, ValueError):
    pass


class NegativeDensityWarning(RuntimeWarning):
    pass


class NonZeroDivergence(NumericalFailure):
    pass


class PathDependence(NumericalFailure):
    pass


# wigner
class GridTooCoarse(NumericalFailure):
    pass


class NotTwoSubsystems(NumericalFailure, ValueError):
    pass


class GridTooLarge(NumericalFailure, ValueError):
    pass


class NonPositiveOperator(NumericalFailure):
    def __init__(self, message: str, min_eigenvalue: float):
        self.min_eigenvalue = min_eigenvalue
        super().__init__(f"{message} (most negative eigenvalue {min_eigenvalue:.3e})")


class FDNoiseWarning(RuntimeWarning):
    pass


# thermofock
class DimensionExplosion(NumericalFailure, ValueError):
    pass


class NonHermitianKernel(NumericalFailure):
    pass


class StepTooLarge(NumericalFailure, ValueError):
    pass


class WeightOverflow(NumericalFailure, OverflowError):
    pass
