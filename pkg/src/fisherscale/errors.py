"""Exception hierarchy shared by all modules."""


class FisherScaleError(Exception):
    """Base class for all package errors."""


class DomainError(FisherScaleError, ValueError):
    """An argument lies outside the admissible domain (sigma <= 0, s not in [0, 1], ...)."""


class ParseError(DomainError):
    """A distribution or score description could not be parsed."""


class NoDensityError(FisherScaleError):
    """The distribution has no continuous part."""


class InfiniteInformationError(FisherScaleError):
    """Fisher information of scale is infinite where finiteness is required."""


class NumericalError(FisherScaleError):
    """A numerical routine failed to reach its target accuracy."""


class QuadratureError(NumericalError):
    """Adaptive quadrature did not converge.

    Carries the best available estimate and the achieved error bound.  When
    ``divergent`` is set the integral over the tails kept growing, which is
    the numerical signature of an infinite integral.
    """

    def __init__(self, message, estimate=None, error_bound=None, divergent=False):
        super().__init__(message)
        self.estimate = estimate
        self.error_bound = error_bound
        self.divergent = divergent


class RootFindingError(NumericalError):
    """The scale estimating equation has no usable root."""
