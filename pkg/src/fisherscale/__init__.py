"""Fisher information of scale for one-dimensional distributions."""
__version__ = "0.1.0"

from .dist import (  # noqa: E402
    Distribution,
    cauchy,
    dirac,
    exponential,
    laplace,
    mix,
    normal,
    parse_dist,
    scale,
    uniform,
)
from .errors import (  # noqa: E402
    DomainError,
    FisherScaleError,
    InfiniteInformationError,
    NoDensityError,
    NumericalError,
    QuadratureError,
    RootFindingError,
)
from .score import ExtendedReal, fisher_closed, fisher_scale, lambda_score, lambda_sigma  # noqa: E402
from .varinfo import Basis, TestFunction, build_basis, convergence_scan, fisher_empirical, fisher_variational  # noqa: E402
from .mest import ScaleScore, asym_variance, calibrate, efficiency, m_estimate  # noqa: E402
from .asymp import McReport, bound_report, l2_remainder, lan_sample, mc_variance  # noqa: E402

__all__ = [
    "__version__",
    "Distribution", "normal", "laplace", "cauchy", "exponential", "uniform", "dirac", "mix", "scale", "parse_dist",
    "FisherScaleError", "DomainError", "NoDensityError", "InfiniteInformationError", "NumericalError",
    "QuadratureError", "RootFindingError",
    "ExtendedReal", "fisher_closed", "fisher_scale", "lambda_score", "lambda_sigma",
    "TestFunction", "Basis", "build_basis", "fisher_variational", "fisher_empirical", "convergence_scan",
    "ScaleScore", "calibrate", "m_estimate", "asym_variance", "efficiency",
    "McReport", "l2_remainder", "lan_sample", "mc_variance", "bound_report",
]
