"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run on its own with ``pytest tests/test_acceptance.py -s`` or
``python3 tests/test_acceptance.py``.
"""
import json
import math
import sys
import time

import numpy as np
import pytest

from fisherscale import dist as D
from fisherscale.asymp import l2_remainder, lan_sample, mc_variance
from fisherscale.cli import main
from fisherscale.mest import asym_variance, bump_score, family_score
from fisherscale.score import fisher_closed, fisher_scale
from fisherscale.varinfo import build_basis, convergence_scan, fisher_variational

from oracles import ORACLE_INFORMATION

REGULAR = {"normal": D.normal(), "laplace": D.laplace(), "exponential": D.exponential(), "cauchy": D.cauchy()}


def test_closed_form_information(criterion):
    expected = {"normal": (2.0, 1e-8), "laplace": (1.0, 1e-8), "exponential": (1.0, 1e-8), "cauchy": (0.5, 1e-6)}
    start = time.perf_counter()
    got = {name: float(fisher_closed(d)) for name, d in REGULAR.items()}
    elapsed = time.perf_counter() - start
    errs = {name: abs(got[name] - expected[name][0]) for name in got}
    oracle_errs = {name: abs(got[name] - ORACLE_INFORMATION[name]) for name in got}
    ok = (all(errs[n] <= expected[n][1] and oracle_errs[n] <= expected[n][1] for n in got)
          and all(abs(ORACLE_INFORMATION[n] - expected[n][0]) <= expected[n][1] for n in got)
          and elapsed < 1.0)
    detail = ", ".join(f"{n}={got[n]:.12g}" for n in got) + f", max oracle gap {max(oracle_errs.values()):.1e}, {elapsed:.3f}s"
    assert criterion(1, "closed-form information", ok, detail)


def test_variational_convergence(criterion):
    start = time.perf_counter()
    normal_vals = [fisher_variational(D.normal(), build_basis("linear", m, D.normal())).value for m in (4, 8, 16, 32)]
    cauchy_val = fisher_variational(D.cauchy(), build_basis("log", 32, D.cauchy())).value
    elapsed = time.perf_counter() - start
    monotone = all(b >= a - 1e-10 for a, b in zip(normal_vals, normal_vals[1:]))
    ok = (monotone and 1.98 <= normal_vals[-1] <= 2 + 1e-6 and 0.49 <= cauchy_val <= 0.5 + 1e-6 and elapsed < 5.0)
    detail = (f"normal {[round(v, 6) for v in normal_vals]}, cauchy log m=32 {cauchy_val:.8f}, {elapsed:.2f}s")
    assert criterion(2, "variational convergence", ok, detail)


def test_lower_bound(criterion):
    rng = np.random.default_rng(20240601)
    worst_product, worst_gap = math.inf, -math.inf
    for d in REGULAR.values():
        info = float(fisher_closed(d))
        kinds = ["linear", "log", "mixed"]
        for k in range(25):
            basis = build_basis(kinds[k % 3], int(rng.integers(2, 17)), d)
            score = bump_score(basis.combination(rng.normal(size=basis.size)), d)
            worst_product = min(worst_product, float(asym_variance(score, d)) * info)
            worst_gap = max(worst_gap, fisher_variational(d, basis).value - info)
    ok = worst_product >= 1 - 1e-8 and worst_gap <= 1e-6
    detail = f"min V1*I = {worst_product:.10f}, max(variational - closed) = {worst_gap:.2e}"
    assert criterion(3, "information bound", ok, detail)


def test_divergence_detection(criterion):
    verdicts = {}
    for label, d in {"uniform(0,2)": D.uniform(0, 2), "mix(normal,dirac(1),0.5)": D.mix(D.normal(), D.dirac(1.0), 0.5)}.items():
        scan = convergence_scan(d, "linear", [4, 8, 16, 32])
        flagged = any(e.divergence_flag for e in scan.estimates) or scan.estimates[-1].value > 1e3
        verdicts[label] = scan.verdict == "divergent" and flagged
    atom = D.dirac(0.0)
    zero_closed = fisher_closed(atom)
    zero_var = fisher_variational(atom, build_basis("mixed", 16, D.normal())).value
    ok = all(verdicts.values()) and zero_closed == 0.0 and zero_var == 0.0
    detail = f"{verdicts}, dirac(0): closed={float(zero_closed)}, variational={zero_var}"
    assert criterion(4, "divergence detection", ok, detail)


def test_equivariance_and_invariance(criterion):
    spread = max(
        max(vals) - min(vals)
        for vals in ([float(fisher_scale(d, s)) * s * s for s in (0.5, 1.0, 3.0)] for d in REGULAR.values())
    )
    transport = 0.0
    for d in REGULAR.values():
        for kind in ("linear", "log", "mixed"):
            basis = build_basis(kind, 16, d)
            v = fisher_variational(d, basis).value
            for s in (0.5, 3.0):
                transport = max(transport, abs(fisher_variational(D.scale(d, s), basis.transported(s)).value - v))
    ok = spread <= 1e-7 and transport <= 1e-10
    detail = f"sigma^2 I_s spread {spread:.1e}, transported-basis gap {transport:.1e}"
    assert criterion(5, "equivariance / invariance", ok, detail)


def test_convexity(criterion):
    rng = np.random.default_rng(6)
    families = list(REGULAR.values())
    basis = build_basis("mixed", 12, D.normal())
    value = lambda d: fisher_variational(d, basis).value
    worst = -math.inf
    for _ in range(50):
        i, j = rng.integers(len(families), size=2)
        d1 = D.scale(families[i], float(rng.uniform(0.3, 3.0)))
        d2 = D.scale(families[j], float(rng.uniform(0.3, 3.0)))
        s = float(rng.uniform())
        worst = max(worst, value(D.mix(d1, d2, s)) - ((1 - s) * value(d1) + s * value(d2)))
    ok = worst <= 1e-9
    assert criterion(6, "convexity of fixed-basis estimator", ok, f"max violation {worst:.3e} over 50 mixtures")


def test_atom_at_zero(criterion):
    worst = 0.0
    for d in REGULAR.values():
        base = float(fisher_closed(d))
        for eps in (0.1, 0.5):
            worst = max(worst, abs(float(fisher_closed(D.mix(d, D.dirac(0.0), eps))) - (1 - eps) * base))
    ok = worst <= 1e-8
    assert criterion(7, "atom at zero", ok, f"max |I(mix) - (1-eps) I| = {worst:.1e}")


def test_m_estimator_efficiency(criterion):
    d = D.normal()
    score = family_score(d)
    start = time.perf_counter()
    r1 = mc_variance(d, score, 1.0, 2000, 2000, seed=8)
    r3 = mc_variance(d, score, 3.0, 2000, 2000, seed=8)
    elapsed = time.perf_counter() - start
    ok1 = abs(r1.variance - 0.5) <= 0.10 * 0.5
    ok3 = abs(r3.variance - 4.5) <= 0.10 * 4.5
    ok = ok1 and ok3 and r1.failures == 0 and r3.failures == 0 and elapsed < 60
    detail = f"var sigma=1: {r1.variance:.4f} (target 0.5), sigma=3: {r3.variance:.4f} (target 4.5), {elapsed:.1f}s"
    assert criterion(8, "M-estimator efficiency (Monte Carlo)", ok, detail)


def test_lan(criterion):
    d = D.normal()
    start = time.perf_counter()
    rep = lan_sample(d, 1.0, 1.0, 5000, 1000, seed=7)
    elapsed = time.perf_counter() - start
    doubled = lan_sample(d, 1.0, 1.0, 10000, 1000, seed=7)
    quadrupled = lan_sample(d, 1.0, 1.0, 20000, 1000, seed=7)
    rem = [r.extra["remainder_abs_mean"] for r in (rep, doubled, quadrupled)]
    ok_mean = abs(rep.mean + 1.0) <= 3 * rep.se_mean
    ok_var = abs(rep.variance - 2.0) <= 0.15 * 2.0
    ok_rem = rem[0] > rem[1] > rem[2]
    ok = ok_mean and ok_var and ok_rem and elapsed < 60
    detail = (f"mean {rep.mean:.4f} (se {rep.se_mean:.4f}), var {rep.variance:.4f}, "
              f"mean|L-T| {[round(v, 5) for v in rem]} for n=5000/10000/20000, {elapsed:.1f}s")
    assert criterion(9, "LAN expansion", ok, detail)


def test_l2_differentiability(criterion):
    ratios = {name: l2_remainder(REGULAR[name], 1.0, 0.01) / l2_remainder(REGULAR[name], 1.0, 0.02)
              for name in ("normal", "exponential")}
    decreasing = {}
    for name, d in REGULAR.items():
        r = [l2_remainder(d, 1.0, t) for t in (0.04, 0.02, 0.01)]
        decreasing[name] = r[0] > r[1] > r[2]
    ok = all(0.4 <= v <= 0.6 for v in ratios.values()) and all(decreasing.values())
    detail = f"r(0.01)/r(0.02) {({k: round(v, 4) for k, v in ratios.items()})}, decreasing {decreasing}"
    assert criterion(10, "L2 differentiability", ok, detail)


def test_determinism(criterion, tmp_path, capsys):
    commands = [
        ["simulate", "--dist", "normal", "--score", "lambda", "--n", "2000", "--reps", "300", "--seed", "42"],
        ["lan", "--dist", "normal", "--h", "1", "--n", "5000", "--reps", "200", "--seed", "42"],
    ]
    results = []
    for argv in commands:
        bodies = []
        for k, workers in enumerate(("1", "4", "1")):
            out = tmp_path / f"{argv[0]}{k}.json"
            assert main(argv + ["--workers", workers, "--output", str(out)]) == 0
            bodies.append(json.dumps(json.loads(out.read_text())["body"], sort_keys=True).encode())
        results.append(bodies[0] == bodies[1] == bodies[2])
        assert main(["--verify", str(tmp_path / f"{argv[0]}0.json")]) == 0
    capsys.readouterr()
    ok = all(results)
    assert criterion(11, "determinism", ok, f"simulate identical={results[0]}, lan identical={results[1]} (workers 1/4/1)")


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-s"]))
