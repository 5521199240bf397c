"""M-estimators of scale and their asymptotic variance.

An M-estimate ``S_n`` solves ``sum(phi(x_i / S_n)) = 0`` for a score
``phi`` calibrated so that ``E_F phi(X) = 0``.  Its asymptotic variance is

    V1(phi, F) = E phi(X)**2 / (E X phi'(X))**2,

which is bounded below by the reciprocal Fisher information of scale.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import brentq

from .dist import Distribution, normal
from .errors import (
    DomainError,
    InfiniteInformationError,
    ParseError,
    QuadratureError,
    RootFindingError,
)
from .quad import QuadratureConfig, expect
from .score import INFINITE, ExtendedReal, fisher_closed, lambda_derivative, lambda_score, require_regular
from .varinfo import Bump, TestFunction

__all__ = [
    "ScaleScore",
    "ScaleEstimate",
    "calibrate",
    "chi2",
    "huber",
    "family_score",
    "bump_score",
    "parse_score",
    "m_estimate",
    "asym_variance",
    "efficiency",
]


# Score pieces are small callable classes so that scores pickle cleanly
# (process pools, cached reports).
class _Square:
    def __call__(self, x):
        return np.square(x)


class _Twice:
    def __call__(self, x):
        return 2.0 * np.asarray(x, dtype=float)


@dataclass(frozen=True)
class _Clipped:
    k: float

    def __call__(self, x):
        return np.minimum(np.square(x), self.k * self.k)


@dataclass(frozen=True)
class _ClippedDeriv:
    k: float

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return np.where(np.abs(x) < self.k, 2.0 * x, 0.0)


@dataclass(frozen=True)
class _Lambda:
    d: Distribution

    def __call__(self, x):
        return lambda_score(self.d, x)


@dataclass(frozen=True)
class _LambdaDeriv:
    d: Distribution

    def __call__(self, x):
        return lambda_derivative(self.d, x)


@dataclass(frozen=True)
class _Bumps:
    tf: TestFunction

    def __call__(self, x):
        return self.tf.value(x)


@dataclass(frozen=True)
class _BumpsDeriv:
    tf: TestFunction

    def __call__(self, x):
        return self.tf.derivative(x)


@dataclass(frozen=True)
class ScaleScore:
    """Calibrated score ``phi(x) = raw(x) - beta``.

    ``monotone`` records that ``x * phi'(x) >= 0`` everywhere, so that
    ``s -> sum(phi(x_i / s))`` is nonincreasing and a bracketed root is unique
    up to flat stretches.
    """

    name: str
    raw: Callable
    raw_derivative: Callable
    beta: float = 0.0
    monotone: bool = False
    breakpoints: tuple[float, ...] = ()

    def phi(self, x):
        out = np.asarray(self.raw(np.asarray(x, dtype=float)), dtype=float) - self.beta
        return float(out) if np.ndim(x) == 0 else out

    def dphi(self, x):
        out = np.asarray(self.raw_derivative(np.asarray(x, dtype=float)), dtype=float)
        out = np.broadcast_to(out, np.shape(x))
        return float(out) if np.ndim(x) == 0 else np.array(out)

    def x_dphi(self, x):
        x = np.asarray(x, dtype=float)
        with np.errstate(invalid="ignore"):
            out = np.where(x == 0.0, 0.0, x * self.dphi(x))
        return float(out) if out.ndim == 0 else out

    __call__ = phi

    def calibrated(self, d: Distribution, cfg: QuadratureConfig | None = None) -> ScaleScore:
        return calibrate(self, d, cfg)


def calibrate(
    phi_raw,
    d: Distribution,
    cfg: QuadratureConfig | None = None,
    *,
    dphi: Callable | None = None,
    name: str = "custom",
    monotone: bool = False,
    breakpoints: Sequence[float] = (),
) -> ScaleScore:
    """Shift ``phi_raw`` so that its mean under ``d`` vanishes.

    ``phi_raw`` may be a plain callable (then ``dphi`` is required for
    variance computations) or an existing :class:`ScaleScore`, whose offset
    is re-fitted to ``d``.
    """
    if isinstance(phi_raw, ScaleScore):
        base = phi_raw
    else:
        if dphi is None:
            raise DomainError("a derivative is required to calibrate a raw score")
        base = ScaleScore(name, phi_raw, dphi, 0.0, monotone, tuple(breakpoints))
    bp = tuple(base.breakpoints) + d.kinks()
    mean_raw = expect(d, lambda x: base.raw(x), cfg, breakpoints=bp)
    return ScaleScore(base.name, base.raw, base.raw_derivative, float(mean_raw), base.monotone, base.breakpoints)


def chi2() -> ScaleScore:
    """``x**2 - 1``: calibrated for the standard normal; its M-estimate is the RMS."""
    return ScaleScore("chi2", _Square(), _Twice(), 1.0, True)


def huber(k: float, d: Distribution | None = None, cfg: QuadratureConfig | None = None) -> ScaleScore:
    """``min(x**2, k**2) - beta`` with ``beta = E_d min(X**2, k**2)`` (default ``d`` normal)."""
    if not k > 0:
        raise DomainError("huber k must be positive")
    raw = ScaleScore(f"huber({k:g})", _Clipped(float(k)), _ClippedDeriv(float(k)), 0.0, True, (-float(k), float(k)))
    return calibrate(raw, d if d is not None else normal(), cfg)


def family_score(d: Distribution) -> ScaleScore:
    """The score ``Lambda`` of ``d`` itself; centered under ``d`` by construction."""
    require_regular(d)
    # x Lambda'(x) >= 0 holds for every single named regular family.
    monotone = len(d.components) == 1 and d.atom0 == 0.0
    return ScaleScore("lambda", _Lambda(d), _LambdaDeriv(d), 0.0, monotone, d.kinks())


def _bumps_monotone(tf: TestFunction) -> bool:
    for b in tf.bumps:
        if b.kind == "log":
            if b.coeff * b.branch < 0:
                return False
        else:
            lo, hi = b.edges
            if not ((b.coeff >= 0 and lo >= 0) or (b.coeff <= 0 and hi <= 0)):
                return False
    return True


def bump_score(tf: TestFunction, d: Distribution, cfg: QuadratureConfig | None = None, name: str = "bumps") -> ScaleScore:
    """Score built from a test function, calibrated under ``d``."""
    raw = ScaleScore(name, _Bumps(tf), _BumpsDeriv(tf), 0.0, _bumps_monotone(tf), tf.breakpoints)
    return calibrate(raw, d, cfg)


_BUMP_RE = re.compile(r"^(linear|log)\(([^)]*)\)$")


def _parse_bump(text: str) -> Bump:
    m = _BUMP_RE.match(text.strip())
    if not m:
        raise ParseError(f"cannot parse bump {text!r}; expected linear(c,w,a) or log(c,w,a,branch)")
    try:
        args = [float(t) for t in m.group(2).split(",")]
    except ValueError as exc:
        raise ParseError(f"non-numeric bump argument in {text!r}") from exc
    kind = m.group(1)
    if kind == "linear" and len(args) in (2, 3):
        return Bump("linear", *args)
    if kind == "log" and len(args) in (2, 3, 4):
        if len(args) == 4:
            args[3] = int(args[3])
        return Bump("log", *args)
    raise ParseError(f"wrong number of arguments in {text!r}")


def parse_score(text: str, d: Distribution, cfg: QuadratureConfig | None = None) -> ScaleScore:
    """Build a named score.

    ``lambda`` (score of ``d``), ``chi2``, ``huber(k)`` (calibrated under
    ``d``) or ``bumps:linear(c,w[,a]);log(c,w[,a[,branch]]);...``.
    """
    t = text.strip()
    if t == "lambda":
        return family_score(d)
    if t == "chi2":
        return chi2()
    m = re.fullmatch(r"huber\(\s*([^)]+)\)", t)
    if m:
        try:
            k = float(m.group(1))
        except ValueError as exc:
            raise ParseError(f"bad huber constant in {text!r}") from exc
        return huber(k, d, cfg)
    if t.startswith("bumps:"):
        parts = [p for p in t[len("bumps:"):].split(";") if p.strip()]
        if not parts:
            raise ParseError("bump score needs at least one bump")
        return bump_score(TestFunction(tuple(_parse_bump(p) for p in parts)), d, cfg, name=t)
    raise ParseError(f"unknown score {text!r}; use lambda, chi2, huber(k) or bumps:...")


# -- estimation --------------------------------------------------------------
class ScaleEstimate(float):
    """Root of the estimating equation; ``roots`` lists every root found."""

    def __new__(cls, value, roots=()):
        obj = super().__new__(cls, value)
        obj.roots = tuple(float(r) for r in roots) or (float(value),)
        return obj

    @property
    def multiplicity(self) -> int:
        return len(self.roots)

    def __reduce__(self):
        return (ScaleEstimate, (float(self), self.roots))


_EXPAND = 60
_GRID = 400


def _equation(x: np.ndarray, score: ScaleScore):
    def psi(log_s):
        return float(np.sum(score.phi(x / math.exp(log_s))))
    return psi


def _solve(psi, a, b):
    return math.exp(brentq(psi, a, b, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500))


def m_estimate(sample, score: ScaleScore) -> ScaleEstimate:
    """Solve ``sum(phi(x_i / s)) = 0`` for ``s > 0``.

    Zero observations add the constant ``phi(0)``.  For monotone scores the
    bracket ``[min|x_i| / 1e6, 1e6 max|x_i|]`` is widened geometrically until
    the sum changes sign; otherwise a log-spaced grid locates every sign
    change and the root nearest the root-mean-square of the data is chosen.
    """
    x = np.asarray(sample, dtype=float).ravel()
    if not np.all(np.isfinite(x)):
        raise DomainError("sample contains non-finite values")
    ax = np.abs(x[x != 0.0])
    if ax.size == 0:
        raise DomainError("scale unidentified: every observation is zero")
    psi = _equation(x, score)
    lo, hi = math.log(ax.min() / 1e6), math.log(ax.max() * 1e6)
    if score.monotone:
        f_lo, f_hi = psi(lo), psi(hi)
        for _ in range(_EXPAND):
            if f_lo >= 0.0:
                break
            lo -= math.log(10.0)
            f_lo = psi(lo)
        for _ in range(_EXPAND):
            if f_hi <= 0.0:
                break
            hi += math.log(10.0)
            f_hi = psi(hi)
        if f_lo == 0.0:
            return ScaleEstimate(math.exp(lo))
        if f_hi == 0.0:
            return ScaleEstimate(math.exp(hi))
        if not (f_lo > 0.0 > f_hi):
            raise RootFindingError("no root: the estimating equation does not change sign")
        return ScaleEstimate(_solve(psi, lo, hi))
    grid = np.linspace(lo, hi, _GRID)
    vals = np.array([psi(t) for t in grid])
    roots = [math.exp(t) for t, v in zip(grid, vals) if v == 0.0]
    change = np.flatnonzero(np.sign(vals[:-1]) * np.sign(vals[1:]) < 0)
    roots += [_solve(psi, grid[i], grid[i + 1]) for i in change]
    if not roots:
        raise RootFindingError("no root: the estimating equation does not change sign")
    roots.sort()
    rms = math.sqrt(float(np.mean(x * x)))
    best = min(roots, key=lambda r: abs(math.log(r / rms)))
    return ScaleEstimate(best, roots)


# -- asymptotics -------------------------------------------------------------
def _moment(d, g, cfg, bp):
    try:
        return expect(d, g, cfg, breakpoints=bp), False
    except QuadratureError as exc:
        if exc.divergent:
            return math.inf, True
        raise


def asym_variance(score: ScaleScore, d: Distribution, cfg: QuadratureConfig | None = None) -> ExtendedReal:
    """``E phi**2 / (E X phi')**2`` as an extended real.

    An infinite second moment gives ``inf``; a zero denominator gives
    ``inf`` if the numerator is positive and a ``"degenerate"`` tag if both
    vanish.
    """
    bp = tuple(score.breakpoints) + d.kinks()
    num, num_inf = _moment(d, lambda x: score.phi(x) ** 2, cfg, bp)
    if num_inf:
        return INFINITE
    den, den_inf = _moment(d, score.x_dphi, cfg, bp)
    if den_inf:
        return ExtendedReal(0.0)
    if den == 0.0:
        return ExtendedReal(math.nan, "degenerate") if num == 0.0 else INFINITE
    return ExtendedReal(num / (den * den))


def efficiency(score: ScaleScore, d: Distribution, cfg: QuadratureConfig | None = None) -> ExtendedReal:
    """``1 / (I * V1)``: one at the family score, below one otherwise."""
    info = fisher_closed(d, cfg)
    if not info.is_finite:
        raise InfiniteInformationError("information infinite: efficiency undefined")
    if info <= 0.0:
        raise DomainError("information is zero: efficiency undefined")
    v = asym_variance(score, d, cfg)
    if v.tag == "degenerate":
        raise DomainError("asymptotic variance is 0/0 for this score")
    if not v.is_finite:
        return ExtendedReal(0.0, "infinite_variance")
    return ExtendedReal(1.0 / (float(info) * float(v)))
