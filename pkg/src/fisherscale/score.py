"""Closed-form scale score and Fisher information of scale.

For a density ``f`` of the punctuated measure the scale score is

    Lambda(x) = -(1 + x f'(x) / f(x)),    Lambda(0) := 0,

and the information is ``I_s1(F) = integral of Lambda**2 dF0``.  Scaled
versions follow from ``Lambda_sigma(x) = Lambda(x / sigma) / sigma`` and
``I_s(F_sigma) = I_s1(F) / sigma**2``.  Irregular components (uniform
laws, point masses off zero) make the information infinite; that outcome
is returned as a tagged value rather than a floating overflow.
"""
from __future__ import annotations

import math

import numpy as np

from .dist import Distribution
from .errors import DomainError, InfiniteInformationError
from .quad import QuadratureConfig, expect_punctuated

__all__ = [
    "ExtendedReal",
    "INFINITE",
    "lambda_score",
    "lambda_derivative",
    "lambda_sigma",
    "fisher_closed",
    "fisher_scale",
    "require_regular",
]


class ExtendedReal(float):
    """A float that also records *why* it is infinite or undefined.

    ``tag`` is ``"finite"``, ``"infinite"``, ``"degenerate"`` (0/0 outside the
    information quotient) or a caller-specific reason.
    """

    def __new__(cls, value, tag: str | None = None):
        obj = super().__new__(cls, value)
        if tag is None:
            tag = "infinite" if math.isinf(value) else "finite"
        obj.tag = tag
        return obj

    @property
    def is_finite(self) -> bool:
        return self.tag == "finite"

    def to_json(self):
        if self.tag == "finite":
            return float(self)
        return {"value": None if math.isnan(self) else ("inf" if math.isinf(self) else float(self)), "tag": self.tag}

    def __reduce__(self):
        return (ExtendedReal, (float(self), self.tag))

    def __repr__(self):
        if self.tag == "finite":
            return f"ExtendedReal({float(self)!r})"
        return f"ExtendedReal({float(self)!r}, tag={self.tag!r})"


INFINITE = ExtendedReal(math.inf, "infinite")


def require_regular(d: Distribution) -> None:
    if not d.is_regular:
        raise InfiniteInformationError("score undefined (information infinite)")


def _scalar_or_array(x, out):
    return float(out) if np.ndim(x) == 0 else out


def lambda_score(d: Distribution, x):
    """Scale score ``Lambda`` of ``d`` at ``x`` (vectorized)."""
    require_regular(d)
    xa = np.asarray(x, dtype=float)
    if not d.has_density:
        return _scalar_or_array(x, np.zeros_like(xa))
    with np.errstate(invalid="ignore"):
        out = -(1.0 + xa * d.dlogpdf(xa))
        inside = np.isfinite(d.logpdf(xa))
    out = np.where((xa != 0.0) & inside, out, 0.0)
    return _scalar_or_array(x, out)


def lambda_derivative(d: Distribution, x):
    """``Lambda'(x) = -(l'(x) + x l''(x))`` with ``l = log f``; zero off the support."""
    require_regular(d)
    xa = np.asarray(x, dtype=float)
    if not d.has_density:
        return _scalar_or_array(x, np.zeros_like(xa))
    comps = d.continuous
    if len(comps) == 1:
        l2 = comps[0][1].d2logpdf(xa)
    else:
        l2 = d.d2pdf_ratio(xa) - d.dlogpdf(xa) ** 2
    with np.errstate(invalid="ignore"):
        out = -(d.dlogpdf(xa) + xa * l2)
        inside = np.isfinite(d.logpdf(xa))
    return _scalar_or_array(x, np.where(inside, out, 0.0))


def lambda_sigma(d: Distribution, sigma: float, x):
    """Score of the scale model at ``sigma``: ``Lambda(x / sigma) / sigma``."""
    if not sigma > 0:
        raise DomainError("sigma must be positive")
    xa = np.asarray(x, dtype=float)
    out = np.asarray(lambda_score(d, xa / sigma)) / sigma
    return _scalar_or_array(x, out)


def fisher_closed(d: Distribution, cfg: QuadratureConfig | None = None) -> ExtendedReal:
    """``I_s1(F)`` via the score: ``integral of Lambda**2 dF0``.

    Infinite for irregular components, exactly 0 for a pure point mass at 0.
    """
    if not d.is_regular:
        return INFINITE
    if not d.has_density:
        return ExtendedReal(0.0)
    value = expect_punctuated(d, lambda x: lambda_score(d, x) ** 2, cfg, breakpoints=d.kinks())
    return ExtendedReal(value)


def fisher_scale(d: Distribution, sigma: float, cfg: QuadratureConfig | None = None) -> ExtendedReal:
    """Equivariant information ``I_s(F_sigma) = I_s1(F) / sigma**2``."""
    if not sigma > 0:
        raise DomainError("sigma must be positive")
    base = fisher_closed(d, cfg)
    if not base.is_finite:
        return base
    return ExtendedReal(float(base) / (sigma * sigma))
