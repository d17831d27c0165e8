"""Exception hierarchy shared by all heatkern modules."""


class HeatKernError(Exception):
    """Base class for every error raised by heatkern."""


class NonpositiveTime(HeatKernError, ValueError):
    pass


class CutPairError(HeatKernError, ValueError):
    """The two points are not joined by a unique minimizing geodesic."""


class OrderUnsupported(HeatKernError, ValueError):
    pass


# the Riesz battery refuses j = 0 under this name
UnsupportedOrder = OrderUnsupported


class ResolutionTooSmall(HeatKernError, ValueError):
    pass


class TruncationNotConverged(HeatKernError, RuntimeError):
    """A series tail criterion was not met within the configured term budget."""


class QuadratureNotConverged(HeatKernError, RuntimeError):
    pass


class GridMismatch(HeatKernError, ValueError):
    pass


class InsufficientPoints(HeatKernError, ValueError):
    pass


class BadTimeOrder(HeatKernError, ValueError):
    pass


class DimensionTooLarge(HeatKernError, ValueError):
    pass


class DegenerateHessian(HeatKernError, ArithmeticError):
    pass


class NegativeEigenvalue(HeatKernError, ArithmeticError):
    pass


class PartitionTooCoarse(HeatKernError, ValueError):
    pass


class ConfigError(HeatKernError, ValueError):
    pass
