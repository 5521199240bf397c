"""One-dimensional members of a scale model.

A :class:`Distribution` is a finite mixture of named laws.  Each law is one of
the absolutely continuous families (normal, laplace, cauchy, exponential,
uniform) or a point mass ``dirac(c)``.  Point masses at zero form the atom
``atom0``; the remainder is the punctuated measure ``F0``.

Scaling acts on every component at once, ``F_sigma(x) = F(x / sigma)``, so a
point mass at zero is a fixed point of the scale action.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize, special

from .errors import DomainError, NoDensityError, ParseError

__all__ = [
    "Law",
    "Distribution",
    "normal",
    "laplace",
    "cauchy",
    "exponential",
    "uniform",
    "dirac",
    "density",
    "cdf",
    "sample",
    "scale",
    "mix",
    "parse_dist",
    "format_dist",
]

FAMILIES = ("normal", "laplace", "cauchy", "exponential", "uniform", "dirac")
REGULAR_FAMILIES = ("normal", "laplace", "cauchy", "exponential")
_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)
_N_PARAMS = {"normal": 0, "laplace": 0, "cauchy": 0, "exponential": 0, "uniform": 2, "dirac": 1}


def _rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


@dataclass(frozen=True)
class Law:
    """A single named family at scale ``sigma``.

    ``params`` holds ``(a, b)`` for uniform and ``(c,)`` for dirac; the
    scaled law lives on ``sigma * [a, b]`` respectively at ``sigma * c``.
    """

    family: str
    params: tuple[float, ...] = ()
    sigma: float = 1.0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise DomainError(f"unknown family {self.family!r}")
        if len(self.params) != _N_PARAMS[self.family]:
            raise DomainError(f"{self.family} takes {_N_PARAMS[self.family]} parameter(s)")
        if not (self.sigma > 0 and math.isfinite(self.sigma)):
            raise DomainError("sigma must be positive and finite")
        if self.family == "uniform" and not self.params[0] < self.params[1]:
            raise DomainError("uniform(a, b) needs a < b")
        object.__setattr__(self, "params", tuple(float(p) for p in self.params))
        object.__setattr__(self, "sigma", float(self.sigma))

    # -- classification ------------------------------------------------------
    @property
    def is_atom(self) -> bool:
        return self.family == "dirac"

    @property
    def location(self) -> float:
        """Position of a point mass."""
        return self.sigma * self.params[0]

    @property
    def regular(self) -> bool:
        return self.family in REGULAR_FAMILIES

    def scaled(self, s: float) -> Law:
        return Law(self.family, self.params, self.sigma * s)

    @property
    def support(self) -> tuple[float, float]:
        f, s = self.family, self.sigma
        if f == "exponential":
            return 0.0, math.inf
        if f == "uniform":
            return s * self.params[0], s * self.params[1]
        if f == "dirac":
            return self.location, self.location
        return -math.inf, math.inf

    @property
    def kinks(self) -> tuple[float, ...]:
        """Points where the density is not smooth."""
        if self.family in ("laplace", "exponential"):
            return (0.0,)
        if self.family == "uniform":
            return self.support
        return ()

    @property
    def singular_points(self) -> tuple[float, ...]:
        """Points off zero where ``x f(x)`` jumps or mass concentrates."""
        if self.family == "uniform":
            return tuple(p for p in self.support if p != 0.0)
        if self.family == "dirac" and self.location != 0.0:
            return (self.location,)
        return ()

    # -- densities -----------------------------------------------------------
    def logpdf(self, x):
        x = np.asarray(x, dtype=float)
        s = self.sigma
        z = x / s
        f = self.family
        with np.errstate(divide="ignore"):
            if f == "normal":
                return -0.5 * z * z - _LOG_SQRT_2PI - math.log(s)
            if f == "laplace":
                return -np.abs(z) - math.log(2.0 * s)
            if f == "cauchy":
                return -math.log(math.pi * s) - np.log1p(z * z)
            if f == "exponential":
                return np.where(z >= 0, -z - math.log(s), -np.inf)
            if f == "uniform":
                a, b = self.params
                return np.where((z >= a) & (z <= b), -math.log((b - a) * s), -np.inf)
        raise NoDensityError("no density: point mass")

    def pdf(self, x):
        return np.exp(self.logpdf(x))

    def dlogpdf(self, x):
        """``f'(x) / f(x)`` where the density is positive (0 elsewhere)."""
        x = np.asarray(x, dtype=float)
        s = self.sigma
        z = x / s
        f = self.family
        if f == "normal":
            return -z / s
        if f == "laplace":
            return -np.sign(z) / s
        if f == "cauchy":
            return -2.0 * z / (s * (1.0 + z * z))
        if f == "exponential":
            return np.where(z > 0, -1.0 / s, 0.0)
        if f == "uniform":
            return np.zeros_like(z)
        raise NoDensityError("no density: point mass")

    def d2logpdf(self, x):
        """Derivative of ``f'/f``."""
        x = np.asarray(x, dtype=float)
        s = self.sigma
        z = x / s
        f = self.family
        if f == "normal":
            return np.full_like(z, -1.0 / (s * s))
        if f == "cauchy":
            z2 = z * z
            return -2.0 * (1.0 - z2) / (s * s * (1.0 + z2) ** 2)
        if f in ("laplace", "exponential", "uniform"):
            return np.zeros_like(z)
        raise NoDensityError("no density: point mass")

    # -- distribution function and quantiles --------------------------------
    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        z = x / self.sigma
        f = self.family
        if f == "normal":
            return special.ndtr(z)
        if f == "laplace":
            return np.where(z < 0, 0.5 * np.exp(np.minimum(z, 0.0)), 1.0 - 0.5 * np.exp(-np.maximum(z, 0.0)))
        if f == "cauchy":
            return np.arctan2(1.0, -z) / math.pi
        if f == "exponential":
            return np.where(z > 0, -np.expm1(-np.maximum(z, 0.0)), 0.0)
        if f == "uniform":
            a, b = self.params
            return np.clip((z - a) / (b - a), 0.0, 1.0)
        return np.where(x >= self.location, 1.0, 0.0)

    def sf(self, x):
        x = np.asarray(x, dtype=float)
        f = self.family
        if f in ("normal", "laplace", "cauchy"):
            return self.cdf(-x)
        if f == "exponential":
            return np.where(x > 0, np.exp(-np.maximum(x, 0.0) / self.sigma), 1.0)
        if f == "uniform":
            a, b = self.params
            return np.clip((b - x / self.sigma) / (b - a), 0.0, 1.0)
        return np.where(x >= self.location, 0.0, 1.0)

    def ppf(self, p):
        """Lower-tail quantile."""
        p = np.asarray(p, dtype=float)
        s = self.sigma
        f = self.family
        with np.errstate(divide="ignore", invalid="ignore"):
            if f == "normal":
                return s * special.ndtri(p)
            if f == "laplace":
                return s * np.where(p < 0.5, np.log(2.0 * p), -np.log(2.0 * (1.0 - p)))
            if f == "cauchy":
                return s * np.where(p <= 0.5, -1.0 / np.tan(math.pi * p), 1.0 / np.tan(math.pi * (1.0 - p)))
            if f == "exponential":
                return -s * np.log1p(-p)
            if f == "uniform":
                a, b = self.params
                return s * (a + p * (b - a))
        return np.full_like(p, self.location)

    def isf(self, q):
        """Upper-tail quantile, accurate for tiny ``q``."""
        q = np.asarray(q, dtype=float)
        if self.family in ("normal", "laplace", "cauchy"):
            return -self.ppf(q)
        with np.errstate(divide="ignore"):
            if self.family == "exponential":
                return -self.sigma * np.log(q)
        if self.family == "uniform":
            a, b = self.params
            return self.sigma * (b - q * (b - a))
        return np.full_like(q, self.location)

    def draw(self, rng: np.random.Generator, n: int) -> np.ndarray:
        f, s = self.family, self.sigma
        if f == "normal":
            return s * rng.standard_normal(n)
        if f == "laplace":
            return rng.laplace(0.0, s, n)
        if f == "cauchy":
            return s * np.tan(math.pi * (rng.random(n) - 0.5))
        if f == "exponential":
            return -s * np.log1p(-rng.random(n))
        if f == "uniform":
            a, b = self.params
            return s * (a + (b - a) * rng.random(n))
        return np.full(n, self.location)

    def __str__(self):
        base = self.family
        if self.params:
            base += "(" + ", ".join(repr(p) for p in self.params) + ")"
        if self.sigma != 1.0:
            base += f"*scale({self.sigma!r})"
        return base


@dataclass(frozen=True)
class Distribution:
    """Finite mixture ``sum_k w_k L_k`` of :class:`Law` components.

    Immutable; identical components are merged on construction so that
    ``mix(d, d, s)`` is ``d`` again.
    """

    parts: tuple[tuple[float, Law], ...]
    _cache: dict = field(default_factory=dict, init=False, repr=False, compare=False, hash=False)

    def __post_init__(self):
        merged: dict[Law, float] = {}
        for w, law in self.parts:
            if not isinstance(law, Law):
                raise DomainError("mixture components must be Law instances")
            w = float(w)
            if not (w >= 0 and math.isfinite(w)):
                raise DomainError("mixture weights must be nonnegative")
            if w > 0:
                merged[law] = merged.get(law, 0.0) + w
        if not merged:
            raise DomainError("distribution has no mass")
        total = math.fsum(merged.values())
        if abs(total - 1.0) > 1e-9:
            raise DomainError(f"mixture weights sum to {total}, not 1")
        object.__setattr__(self, "parts", tuple((w, law) for law, w in merged.items()))

    # -- summary fields ----------------------------------------------------------
    @property
    def family(self) -> str:
        return self.parts[0][1].family if len(self.parts) == 1 else "mixture"

    @property
    def sigma(self) -> float:
        """Scale of a single-law distribution (1.0 for mixtures)."""
        return self.parts[0][1].sigma if len(self.parts) == 1 else 1.0

    @property
    def components(self) -> tuple[tuple[float, Law], ...]:
        return self.parts

    @property
    def atom0(self) -> float:
        return math.fsum(w for w, law in self.parts if law.is_atom and law.location == 0.0)

    @property
    def atoms(self) -> tuple[tuple[float, float], ...]:
        """``(location, mass)`` of every point mass, including the one at zero."""
        return tuple((law.location, w) for w, law in self.parts if law.is_atom)

    @property
    def continuous(self) -> tuple[tuple[float, Law], ...]:
        return tuple((w, law) for w, law in self.parts if not law.is_atom)

    @property
    def continuous_mass(self) -> float:
        return math.fsum(w for w, _ in self.continuous)

    @property
    def has_density(self) -> bool:
        return bool(self.continuous)

    @property
    def is_regular(self) -> bool:
        """Whether every component satisfies the density conditions for finite information.

        Atoms are admissible only at zero; all continuous components must be
        regular families.
        """
        return all(
            (law.is_atom and law.location == 0.0) or law.regular for _, law in self.parts
        )

    def singular_points(self) -> tuple[float, ...]:
        pts = sorted({p for _, law in self.parts for p in law.singular_points})
        return tuple(pts)

    def kinks(self) -> tuple[float, ...]:
        return tuple(sorted({k for _, law in self.continuous for k in law.kinks}))

    # -- continuous part -----------------------------------------------------
    def _require_density(self):
        if not self.continuous:
            raise NoDensityError("no density: distribution is a pure point mass")

    def logpdf(self, x):
        """Log of the Lebesgue density of the continuous part (atoms excluded)."""
        self._require_density()
        x = np.asarray(x, dtype=float)
        comps = self.continuous
        if len(comps) == 1:
            w, law = comps[0]
            return law.logpdf(x) + math.log(w)
        stack = np.stack([law.logpdf(x) + math.log(w) for w, law in comps])
        return special.logsumexp(stack, axis=0)

    def pdf(self, x):
        return np.exp(self.logpdf(x))

    def _responsibilities(self, x):
        comps = self.continuous
        stack = np.stack([law.logpdf(x) + math.log(w) for w, law in comps])
        total = special.logsumexp(stack, axis=0)
        with np.errstate(invalid="ignore"):
            r = np.exp(stack - total)
        return np.where(np.isfinite(total), r, 0.0)

    def dlogpdf(self, x):
        """``f'/f`` of the continuous-part density; 0 where the density vanishes."""
        self._require_density()
        x = np.asarray(x, dtype=float)
        comps = self.continuous
        if len(comps) == 1:
            return comps[0][1].dlogpdf(x)
        r = self._responsibilities(x)
        return sum(r[k] * law.dlogpdf(x) for k, (_, law) in enumerate(comps))

    def d2pdf_ratio(self, x):
        """``f''/f`` of the continuous-part density."""
        self._require_density()
        x = np.asarray(x, dtype=float)
        comps = self.continuous
        if len(comps) == 1:
            law = comps[0][1]
            return law.d2logpdf(x) + law.dlogpdf(x) ** 2
        r = self._responsibilities(x)
        return sum(r[k] * (law.d2logpdf(x) + law.dlogpdf(x) ** 2) for k, (_, law) in enumerate(comps))

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        return sum(w * law.cdf(x) for w, law in self.parts)

    def continuous_cdf(self, x):
        """Distribution function of the continuous part, normalized to mass one."""
        self._require_density()
        x = np.asarray(x, dtype=float)
        return sum(w * law.cdf(x) for w, law in self.continuous) / self.continuous_mass

    def continuous_sf(self, x):
        self._require_density()
        x = np.asarray(x, dtype=float)
        return sum(w * law.sf(x) for w, law in self.continuous) / self.continuous_mass

    def continuous_ppf(self, p: float) -> float:
        """Quantile of the normalized continuous part."""
        return self._invert(p, upper=False)

    def continuous_isf(self, q: float) -> float:
        """Upper quantile of the normalized continuous part."""
        return self._invert(q, upper=True)

    def _invert(self, p: float, upper: bool) -> float:
        self._require_density()
        comps = self.continuous
        if len(comps) == 1:
            law = comps[0][1]
            return float(law.isf(p) if upper else law.ppf(p))
        qs = [float(law.isf(p) if upper else law.ppf(p)) for _, law in comps]
        lo, hi = min(qs), max(qs)
        if lo == hi:
            return lo
        fn = self.continuous_sf if upper else self.continuous_cdf
        return optimize.brentq(lambda t: float(fn(t)) - p, lo, hi, xtol=1e-300, rtol=4 * np.finfo(float).eps)

    # -- transformations -----------------------------------------------------
    def scale(self, sigma: float) -> Distribution:
        if not (sigma > 0 and math.isfinite(sigma)):
            raise DomainError("scale factor must be positive")
        return Distribution(tuple((w, law.scaled(sigma)) for w, law in self.parts))

    def sample(self, n: int, seed=None) -> np.ndarray:
        """Draw ``n`` i.i.d. observations; deterministic for a fixed seed."""
        if n < 1:
            raise DomainError("sample size must be positive")
        rng = _rng(seed)
        if len(self.parts) == 1:
            return self.parts[0][1].draw(rng, n)
        cum = np.cumsum([w for w, _ in self.parts])
        labels = np.searchsorted(cum, rng.random(n) * cum[-1], side="right")
        labels = np.minimum(labels, len(self.parts) - 1)
        out = np.empty(n)
        for k, (_, law) in enumerate(self.parts):
            idx = np.flatnonzero(labels == k)
            if idx.size:
                out[idx] = law.draw(rng, idx.size)
        return out

    def __str__(self):
        return format_dist(self)


# -- constructors ------------------------------------------------------------
def _single(family, params=(), sigma=1.0) -> Distribution:
    return Distribution(((1.0, Law(family, tuple(params), sigma)),))


def normal(sigma: float = 1.0) -> Distribution:
    return _single("normal", sigma=sigma)


def laplace(sigma: float = 1.0) -> Distribution:
    return _single("laplace", sigma=sigma)


def cauchy(sigma: float = 1.0) -> Distribution:
    return _single("cauchy", sigma=sigma)


def exponential(sigma: float = 1.0) -> Distribution:
    return _single("exponential", sigma=sigma)


def uniform(a: float = 0.0, b: float = 1.0) -> Distribution:
    return _single("uniform", (a, b))


def dirac(c: float = 0.0) -> Distribution:
    return _single("dirac", (c,))


# -- operation-style API -----------------------------------------------------
def density(d: Distribution, x):
    """Lebesgue density of the continuous part of ``d`` at ``x``."""
    out = d.pdf(x)
    return float(out) if np.ndim(out) == 0 else out


def cdf(d: Distribution, x):
    """``P(X <= x)``, including point masses at or below ``x``."""
    out = d.cdf(x)
    return float(out) if np.ndim(out) == 0 else out


def sample(d: Distribution, n: int, seed=None) -> np.ndarray:
    return d.sample(n, seed)


def scale(d: Distribution, sigma: float) -> Distribution:
    return d.scale(sigma)


def mix(d1: Distribution, d2: Distribution, s: float) -> Distribution:
    """``(1 - s) d1 + s d2``."""
    if not 0.0 <= s <= 1.0:
        raise DomainError("mixing weight must lie in [0, 1]")
    parts = [((1.0 - s) * w, law) for w, law in d1.parts] + [(s * w, law) for w, law in d2.parts]
    return Distribution(tuple(parts))


# -- text form ---------------------------------------------------------------
_NUM = r"[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?"
_TERM = re.compile(
    rf"^\s*(?:(?P<w>{_NUM})\s*\*\s*)?(?P<name>[a-z][a-z0-9_]*)\s*(?:\((?P<args>[^()]*)\))?(?P<deco>.*?)\s*$"
)
_DECO = re.compile(r"\s*(?P<op>\*\s*scale|\+\s*atom0)\s*\(\s*(?P<arg>[^()]*?)\s*\)")
_ALIASES = {"gauss": "normal", "gaussian": "normal", "exp": "exponential", "double_exponential": "laplace"}
_DEFAULT_PARAMS = {"uniform": (0.0, 1.0), "dirac": (0.0,)}


def _parse_number(text: str) -> float:
    try:
        return float(text)
    except ValueError:
        raise ParseError(f"not a number: {text!r}") from None


def _parse_term(term: str) -> tuple[float | None, Distribution]:
    m = _TERM.match(term)
    if not m:
        raise ParseError(f"cannot parse distribution term {term!r}")
    name = _ALIASES.get(m["name"], m["name"])
    if name not in FAMILIES:
        raise ParseError(f"unknown family {m['name']!r}")
    if m["args"] is not None and m["args"].strip():
        params = tuple(_parse_number(a) for a in m["args"].split(","))
    else:
        params = _DEFAULT_PARAMS.get(name, ())
    try:
        d = _single(name, params)
    except DomainError as exc:
        raise ParseError(str(exc)) from None
    deco = m["deco"]
    pos = 0
    for dm in _DECO.finditer(deco):
        if deco[pos:dm.start()].strip():
            break
        pos = dm.end()
        value = _parse_number(dm["arg"])
        try:
            if dm["op"].startswith("*"):
                d = d.scale(value)
            else:
                d = mix(d, dirac(0.0), value)
        except DomainError as exc:
            raise ParseError(str(exc)) from None
    if deco[pos:].strip():
        raise ParseError(f"unexpected text {deco[pos:].strip()!r} in {term!r}")
    w = None if m["w"] is None else _parse_number(m["w"])
    return w, d


def parse_dist(text: str) -> Distribution:
    """Parse a distribution string such as ``"0.9*normal ++ 0.1*dirac(0)"``.

    Grammar: ``name[(params)]`` followed by any number of ``*scale(s)`` and
    ``+atom0(eps)`` decorations; mixtures join weighted terms with ``++``.
    An optional leading ``mix:`` is ignored.
    """
    body = text.strip()
    if body.lower().startswith("mix:"):
        body = body[4:]
    terms = [t for t in body.split("++")]
    if not all(t.strip() for t in terms):
        raise ParseError(f"empty mixture term in {text!r}")
    parsed = [_parse_term(t) for t in terms]
    if len(parsed) == 1:
        w, d = parsed[0]
        if w is not None and w != 1.0:
            raise ParseError("a single term must carry weight 1")
        return d
    if any(w is None for w, _ in parsed):
        raise ParseError("every mixture term needs a weight")
    parts = []
    for w, d in parsed:
        if w < 0:
            raise ParseError("mixture weights must be nonnegative")
        parts.extend((w * wk, law) for wk, law in d.parts)
    try:
        return Distribution(tuple(parts))
    except DomainError as exc:
        raise ParseError(str(exc)) from None


def format_dist(d: Distribution) -> str:
    """Inverse of :func:`parse_dist` (exact round trip of all floats)."""
    if len(d.parts) == 1:
        return str(d.parts[0][1])
    return " ++ ".join(f"{w!r}*{law}" for w, law in d.parts)
