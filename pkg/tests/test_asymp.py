import math

import numpy as np
import pytest

from fisherscale import dist as D
from fisherscale.asymp import McReport, bound_report, l2_remainder, lan_sample, mc_variance, replicate_seed
from fisherscale.errors import DomainError, InfiniteInformationError
from fisherscale.mest import chi2, family_score, huber
from fisherscale.varinfo import convergence_scan

REGULAR = [D.normal(), D.laplace(), D.exponential(), D.cauchy()]
IRREGULAR = [D.uniform(0, 2), D.mix(D.normal(), D.dirac(1.0), 0.5)]


class TestL2Remainder:
    @pytest.mark.parametrize("d", [D.normal(), D.exponential()])
    def test_linear_rate(self, d):
        ratio = l2_remainder(d, 1.0, 0.01) / l2_remainder(d, 1.0, 0.02)
        assert 0.4 <= ratio <= 0.6

    @pytest.mark.parametrize("d", REGULAR)
    @pytest.mark.parametrize("sigma", [0.5, 1.0, 2.0])
    def test_decreasing(self, d, sigma):
        r = [l2_remainder(d, sigma, t) for t in (0.04, 0.02, 0.01)]
        assert r[0] > r[1] > r[2] > 0

    @pytest.mark.parametrize("eps", [0.1, 0.5])
    def test_atom_at_zero(self, eps):
        a = l2_remainder(D.normal(), 1.0, 0.02)
        b = l2_remainder(D.mix(D.normal(), D.dirac(0.0), eps), 1.0, 0.02)
        assert b / a == pytest.approx(math.sqrt(1 - eps), rel=1e-6)

    def test_negative_step(self):
        assert l2_remainder(D.normal(), 1.0, -0.02) == pytest.approx(l2_remainder(D.normal(), 1.0, 0.02), rel=0.1)

    def test_direct_formula(self):
        # brute force on a fine grid for the normal
        sigma, t = 1.0, 0.05
        x = np.linspace(-40, 40, 400_001)
        f0 = D.density(D.normal(sigma), x)
        f1 = D.density(D.normal(sigma + t), x)
        lam = (x * x / sigma ** 2 - 1) / sigma
        integrand = (np.sqrt(f1) - np.sqrt(f0) * (1 + 0.5 * t * lam)) ** 2
        ref = math.sqrt(np.trapezoid(integrand, x)) / t
        assert l2_remainder(D.normal(), sigma, t) == pytest.approx(ref, rel=1e-6)

    @pytest.mark.parametrize("d", IRREGULAR)
    def test_irregular_rejected(self, d):
        with pytest.raises(InfiniteInformationError, match="information infinite"):
            l2_remainder(d, 1.0, 0.01)

    @pytest.mark.parametrize("args", [(0.0, 0.1), (1.0, 0.0), (1.0, -1.5)])
    def test_domain(self, args):
        with pytest.raises(DomainError):
            l2_remainder(D.normal(), *args)


class TestLan:
    def test_small_run(self):
        rep = lan_sample(D.normal(), 1.0, 1.0, 1000, 300, 7)
        assert rep.n == 1000 and rep.reps == 300
        assert rep.targets["mean"] == pytest.approx(-1.0, abs=1e-10)
        assert abs(rep.mean + 1.0) < 4 * rep.se_mean
        assert rep.extra["remainder_abs_mean"] < 0.2

    def test_worker_count_irrelevant(self):
        a = lan_sample(D.laplace(), 2.0, 0.5, 400, 64, 11, workers=1)
        b = lan_sample(D.laplace(), 2.0, 0.5, 400, 64, 11, workers=3)
        assert a == b

    def test_seed_matters(self):
        a = lan_sample(D.normal(), 1.0, 1.0, 100, 20, 1)
        b = lan_sample(D.normal(), 1.0, 1.0, 100, 20, 2)
        assert a.mean != b.mean

    @pytest.mark.parametrize("d", REGULAR)
    @pytest.mark.parametrize("h", [0.5, 1.0])
    def test_mean_variance_relation(self, d, h):
        rep = lan_sample(d, 1.0, h, 1000, 400, 2024)
        combined = math.hypot(rep.se_mean, 0.5 * rep.se_variance)
        assert abs(rep.mean + 0.5 * rep.variance) <= 4 * combined

    def test_atom_at_zero_does_not_contribute(self):
        rep = lan_sample(D.mix(D.normal(), D.dirac(0.0), 0.5), 1.0, 1.0, 2000, 200, 3)
        assert rep.targets["variance"] == pytest.approx(1.0, abs=1e-8)
        assert abs(rep.mean + 0.5) < 4 * rep.se_mean

    @pytest.mark.parametrize("d", IRREGULAR)
    def test_irregular_rejected(self, d):
        with pytest.raises(InfiniteInformationError, match="information infinite"):
            lan_sample(d, 1.0, 1.0, 100, 10, 0)

    def test_step_must_stay_positive(self):
        with pytest.raises(DomainError):
            lan_sample(D.normal(), 0.01, -1.0, 100, 10, 0)

    @pytest.mark.parametrize("reps", [0, 1])
    def test_reps(self, reps):
        with pytest.raises(DomainError):
            lan_sample(D.normal(), 1.0, 1.0, 100, reps, 0)


class TestMcVariance:
    def test_chi2_small(self):
        rep = mc_variance(D.normal(), chi2(), 1.0, 500, 400, 3)
        assert rep.targets["variance"] == pytest.approx(0.5, abs=1e-10)
        assert abs(rep.variance - 0.5) < 0.15
        assert rep.failures == 0

    def test_scaled_target(self):
        rep = mc_variance(D.normal(), chi2(), 3.0, 200, 50, 3)
        assert rep.targets["variance"] == pytest.approx(4.5, abs=1e-9)

    def test_worker_count_irrelevant(self):
        score = huber(1.5, D.cauchy())
        a = mc_variance(D.cauchy(), score, 1.0, 300, 40, 5, workers=1)
        b = mc_variance(D.cauchy(), score, 1.0, 300, 40, 5, workers=4)
        assert a == b

    def test_failures_counted(self):
        # with n = 1 a zero draw leaves the equation without a root
        rep = mc_variance(D.mix(D.normal(), D.dirac(0.0), 0.5), chi2(), 1.0, 1, 200, 1)
        assert rep.failures > 0 and not rep.checks["failures"]

    def test_report_invariants(self):
        rep = mc_variance(D.laplace(), family_score(D.laplace()), 1.0, 100, 30, 9)
        assert rep.se_mean == pytest.approx(math.sqrt(rep.variance / rep.reps))
        with pytest.raises(DomainError):
            McReport("x", 1, 1, 0, 0.0, 0.0, 0.0, 0.0)


class TestBoundReport:
    def test_normal_table(self):
        d = D.normal()
        rep = bound_report(d, [family_score(d), huber(1.5), chi2()])
        assert rep.ok and len(rep.rows) == 3
        assert all(r.efficiency <= 1 + 1e-8 for r in rep.rows)
        assert rep.rows[0].efficiency == pytest.approx(1.0, abs=1e-8)

    def test_single_row(self):
        rep = bound_report(D.laplace(), [family_score(D.laplace())])
        assert len(rep.rows) == 1 and rep.rows[0].efficiency == pytest.approx(1.0, abs=1e-8)

    def test_empty(self):
        rep = bound_report(D.normal(), [])
        assert rep.rows == [] and rep.ok

    def test_infinite_variance_row(self):
        rep = bound_report(D.cauchy(), [chi2()])
        assert rep.rows[0].efficiency == 0.0 and rep.ok

    def test_requires_finite_information(self):
        with pytest.raises(InfiniteInformationError):
            bound_report(D.uniform(0, 1), [chi2()])


def test_replicate_seeds_distinct():
    states = {replicate_seed(5, r).generate_state(2).tobytes() for r in range(100)}
    assert len(states) == 100


@pytest.mark.parametrize("d", IRREGULAR)
def test_scan_and_asymptotics_agree_on_divergence(d):
    assert convergence_scan(d, "linear", [4, 8, 16, 32]).verdict == "divergent"
    with pytest.raises(InfiniteInformationError):
        l2_remainder(d, 1.0, 0.01)
    with pytest.raises(InfiniteInformationError):
        lan_sample(d, 1.0, 1.0, 50, 5, 0)
