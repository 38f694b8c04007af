"""Exception hierarchy shared by all modules."""


class QsdLabError(Exception):
    """Base class for every error raised by this package."""


class MapValidationError(QsdLabError, ValueError):
    pass


class ContinuityViolation(MapValidationError):
    """The sink does not match the base map at the hole endpoints."""


class ExpansionViolation(MapValidationError):
    """|f'| <= 1 somewhere outside the hole."""


class PhaseLeak(MapValidationError):
    """Noisy images escape the invariant interval."""


class GridTooCoarse(QsdLabError, ValueError):
    """Cell width does not resolve the noise kernel or the hole."""


class GridMismatch(QsdLabError, ValueError):
    pass


class NoConvergence(QsdLabError, RuntimeError):
    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


class ZeroOperator(QsdLabError, RuntimeError):
    """The conditioned operator annihilated the iterate."""


class SingularResolvent(QsdLabError, RuntimeError):
    """(I - T) could not be inverted on mean-zero functions."""


class Extinction(QsdLabError, RuntimeError):
    """Every particle of a killed ensemble entered the hole in one step."""


class DegenerateFit(QsdLabError, ValueError):
    pass


class PlanInvalid(QsdLabError, ValueError):
    pass
