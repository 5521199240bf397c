"""Numerical checks of the asymptotic theory of scale models.

* ``l2_remainder`` measures how far ``sqrt(f_{sigma+t})`` is from its
  first-order expansion ``sqrt(f_sigma) * (1 + t Lambda_sigma / 2)``.
* ``lan_sample`` simulates log-likelihood ratios at ``sigma + h / sqrt(n)``
  and compares them with the quadratic LAN approximation.
* ``mc_variance`` checks the asymptotic variance of an M-estimator.
* ``bound_report`` tabulates asymptotic variances against ``1 / I``.

Monte Carlo replicates draw from ``SeedSequence(seed, spawn_key=(r,))`` and
write into preallocated slots, so reports do not depend on the number of
worker threads.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, NamedTuple, Sequence

import numpy as np

from .dist import Distribution, scale
from .errors import DomainError, InfiniteInformationError, RootFindingError
from .mest import ScaleScore, asym_variance, m_estimate
from .quad import DEFAULT_CONFIG, QuadratureConfig, expect_punctuated
from .score import ExtendedReal, fisher_closed, fisher_scale, lambda_sigma, require_regular

__all__ = [
    "McReport",
    "BoundRow",
    "BoundReport",
    "replicate_seed",
    "l2_remainder",
    "lan_sample",
    "mc_variance",
    "bound_report",
]

FAILURE_LIMIT = 0.01


@dataclass(frozen=True)
class McReport:
    """Summary of a Monte Carlo experiment."""

    experiment: str
    n: int
    reps: int
    seed: int
    mean: float
    variance: float
    se_mean: float
    se_variance: float
    targets: dict = field(default_factory=dict)
    checks: dict = field(default_factory=dict)
    failures: int = 0
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.reps < 2:
            raise DomainError("reps must be at least 2")

    @property
    def passed(self) -> bool:
        return all(self.checks.values())

    @property
    def failure_rate(self) -> float:
        return self.failures / self.reps

    def to_record(self) -> dict:
        return {
            "experiment": self.experiment,
            "n": self.n,
            "reps": self.reps,
            "seed": self.seed,
            "mean": self.mean,
            "variance": self.variance,
            "se_mean": self.se_mean,
            "se_variance": self.se_variance,
            "targets": dict(self.targets),
            "checks": dict(self.checks),
            "failures": self.failures,
            "passed": self.passed,
            **self.extra,
        }


def replicate_seed(seed: int, r: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(seed, spawn_key=(r,))


def _check_reps(n: int, reps: int, seed: int):
    if int(n) != n or n < 1:
        raise DomainError("n must be a positive integer")
    if int(reps) != reps or reps < 2:
        raise DomainError("reps must be an integer >= 2")
    if int(seed) != seed or seed < 0:
        raise DomainError("seed must be a nonnegative integer")


def _run(task: Callable[[int], object], reps: int, workers: int) -> list:
    """Evaluate ``task(r)`` for every replicate; results stay in replicate order."""
    if workers < 1:
        raise DomainError("workers must be positive")
    if workers == 1:
        return [task(r) for r in range(reps)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(task, range(reps)))


def _moments(values: np.ndarray) -> tuple[float, float, float, float]:
    k = values.size
    mean = float(np.sum(values) / k)
    dev = values - mean
    var = float(np.sum(dev * dev) / (k - 1))
    se_mean = math.sqrt(var / k)
    # standard error of the sample variance from the spread of squared deviations
    sq = dev * dev
    sq_mean = float(np.sum(sq) / k)
    se_var = math.sqrt(float(np.sum((sq - sq_mean) ** 2) / (k - 1)) / k)
    return mean, var, se_mean, se_var


# -- L2 differentiability ----------------------------------------------------
def l2_remainder(d: Distribution, sigma: float, t: float, cfg: QuadratureConfig | None = None) -> float:
    """``|| sqrt(f_{sigma+t}) - sqrt(f_sigma) (1 + t Lambda_sigma / 2) ||_2 / |t|``.

    Computed as the square root of
    ``integral (expm1(delta / 2) - t Lambda_sigma / 2)**2 dF_sigma`` over the
    continuous part, with ``delta`` the log density ratio; an atom at zero
    does not move with ``sigma`` and contributes nothing.
    """
    require_regular(d)
    if not sigma > 0:
        raise DomainError("sigma must be positive")
    if t == 0 or not sigma + t > 0:
        raise DomainError("t must be nonzero with sigma + t > 0")
    cfg = cfg or DEFAULT_CONFIG
    # the integral is O(t**4); keep the absolute tolerance proportionate
    tight = replace(cfg, abs_tol=cfg.abs_tol * min(1.0, t ** 4))
    base, moved = scale(d, sigma), scale(d, sigma + t)

    def sq(x):
        with np.errstate(invalid="ignore"):
            delta = moved.logpdf(x) - base.logpdf(x)
        delta = np.where(np.isfinite(delta), delta, 0.0)
        return (np.expm1(0.5 * delta) - 0.5 * t * lambda_sigma(d, sigma, x)) ** 2

    bp = tuple(k * sigma for k in d.kinks())
    val = expect_punctuated(base, sq, tight, breakpoints=bp)
    return math.sqrt(max(val, 0.0)) / abs(t)


# -- LAN ---------------------------------------------------------------------
def lan_sample(
    d: Distribution,
    sigma: float,
    h: float,
    n: int,
    reps: int,
    seed: int,
    workers: int = 1,
    cfg: QuadratureConfig | None = None,
) -> McReport:
    """Simulate ``L = sum log(f_{sigma + h/sqrt(n)} / f_sigma)(x_i)`` under ``F_sigma``.

    The linearization is ``T = h / sqrt(n) * sum Lambda_sigma(x_i) - h**2 I / 2``
    with ``I = I_s(F_sigma)``.  Checks: mean within 3 standard errors of
    ``-h**2 I / 2``, variance within 15% of ``h**2 I``, and
    ``|mean + var / 2|`` within 4 combined standard errors.
    """
    require_regular(d)
    _check_reps(n, reps, seed)
    if not sigma > 0:
        raise DomainError("sigma must be positive")
    step = h / math.sqrt(n)
    if not sigma + step > 0:
        raise DomainError("sigma + h / sqrt(n) must be positive")
    info = float(fisher_scale(d, sigma, cfg))
    base, moved = scale(d, sigma), scale(d, sigma + step)
    shift = 0.5 * h * h * info

    def one(r):
        x = base.sample(n, replicate_seed(seed, r))
        x = x[x != 0.0]
        ll = float(np.sum(moved.logpdf(x) - base.logpdf(x)))
        lin = step * float(np.sum(lambda_sigma(d, sigma, x))) - shift
        return ll, lin

    out = np.array(_run(one, reps, workers), dtype=float).reshape(reps, 2)
    L, T = out[:, 0], out[:, 1]
    mean, var, se_mean, se_var = _moments(L)
    rem = L - T
    target_mean, target_var = -shift, 2.0 * shift
    combined = math.hypot(se_mean, 0.5 * se_var)
    checks = {
        "mean": abs(mean - target_mean) <= 3.0 * se_mean,
        "variance": abs(var - target_var) <= 0.15 * target_var,
        "mean_variance_relation": abs(mean + 0.5 * var) <= 4.0 * combined,
    }
    extra = {
        "sigma": sigma,
        "h": h,
        "information": info,
        "remainder_abs_mean": float(np.sum(np.abs(rem)) / reps),
        "remainder_mean": float(np.sum(rem) / reps),
        "remainder_variance": _moments(rem)[1],
    }
    return McReport("lan", n, reps, seed, mean, var, se_mean, se_var,
                    {"mean": target_mean, "variance": target_var}, checks, 0, extra)


# -- M-estimator variance ----------------------------------------------------
def mc_variance(
    d: Distribution,
    score: ScaleScore,
    sigma: float,
    n: int,
    reps: int,
    seed: int,
    workers: int = 1,
    cfg: QuadratureConfig | None = None,
    rel_tol: float = 0.10,
) -> McReport:
    """Empirical variance of ``sqrt(n) (S_n - sigma)`` against ``sigma**2 V1``.

    Replicates whose estimating equation has no root are counted; more than
    1% of them fails the run.
    """
    _check_reps(n, reps, seed)
    if not sigma > 0:
        raise DomainError("sigma must be positive")
    v1 = asym_variance(score, d, cfg)
    target = sigma * sigma * float(v1) if v1.is_finite else math.inf
    law = scale(d, sigma)
    root_n = math.sqrt(n)

    def one(r):
        x = law.sample(n, replicate_seed(seed, r))
        try:
            return root_n * (float(m_estimate(x, score)) - sigma)
        except (RootFindingError, DomainError):
            return math.nan

    stats = np.array(_run(one, reps, workers), dtype=float)
    ok = np.isfinite(stats)
    failures = int(reps - ok.sum())
    if ok.sum() < 2:
        raise RootFindingError("no root in almost every replicate")
    mean, var, se_mean, se_var = _moments(stats[ok])
    checks = {
        "variance": bool(math.isfinite(target) and abs(var - target) <= rel_tol * target),
        "failures": failures <= FAILURE_LIMIT * reps,
    }
    extra = {"sigma": sigma, "score": score.name, "v1": v1.to_json(), "rel_tol": rel_tol}
    return McReport("mc_variance", n, reps, seed, mean, var, se_mean, se_var,
                    {"variance": target}, checks, failures, extra)


# -- information bound table -------------------------------------------------
class BoundRow(NamedTuple):
    score: str
    v1: ExtendedReal
    inverse_information: float
    efficiency: float


@dataclass(frozen=True)
class BoundReport:
    rows: list
    information: float
    ok: bool

    def to_record(self) -> dict:
        return {
            "information": self.information,
            "ok": self.ok,
            "rows": [
                {"score": r.score, "v1": r.v1.to_json(), "inverse_information": r.inverse_information,
                 "efficiency": r.efficiency}
                for r in self.rows
            ],
        }


def bound_report(d: Distribution, scores: Sequence[ScaleScore], cfg: QuadratureConfig | None = None,
                 atol: float = 1e-8) -> BoundReport:
    """``V1`` of each score next to ``1 / I``; ``ok`` when no row beats the bound."""
    info = fisher_closed(d, cfg)
    if not info.is_finite:
        raise InfiniteInformationError("information infinite: no variance bound")
    if info <= 0.0:
        raise DomainError("information is zero: no variance bound")
    inv = 1.0 / float(info)
    rows = []
    ok = True
    for s in scores:
        v = asym_variance(s, d, cfg)
        if v.tag == "degenerate":
            eff = math.nan
            ok = False
        else:
            eff = 0.0 if math.isinf(v) else inv / float(v)
            ok = ok and float(v) >= inv - atol
        rows.append(BoundRow(s.name, v, inv, eff))
    return BoundReport(rows, float(info), ok)
