"""Exception hierarchy shared by all evp_lab modules."""


class EvpLabError(Exception):
    """Base class for every error raised by evp_lab."""


class RationalAtPrecision(EvpLabError):
    """The continued fraction terminated: the number is rational at working precision.

    ``partial`` holds the expansion computed up to and including the last
    exact convergent.
    """

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial


class InsufficientDepth(EvpLabError):
    pass


class NonPositiveFunction(EvpLabError):
    pass


class MeanObstruction(EvpLabError):
    pass


class Resonance(EvpLabError):
    pass


class NotDamped(EvpLabError):
    pass


class DegenerateEnvironment(EvpLabError):
    pass


class ConstructionFailed(EvpLabError):
    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class CenteringViolation(EvpLabError):
    pass


class StepCapExceeded(EvpLabError):
    pass


class SegmentIncomplete(EvpLabError):
    pass


class OrderTooHigh(EvpLabError):
    pass


class PreconditionFailed(EvpLabError):
    pass


class NuResolution(EvpLabError):
    pass


class ConfigError(EvpLabError):
    pass
