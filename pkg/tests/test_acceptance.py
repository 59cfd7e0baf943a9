"""Exit criteria, one test per criterion, each reporting a single PASS/FAIL line."""

import math
import subprocess
import sys
import time

import numpy as np
import pytest
from scipy.stats import chi2

from cal.generate import corpus, random_coverage, random_mrs
from cal.instance import Instance, save
from cal.mechanism import AdaptiveSampler, midr_allocate_batch, vcg_payment_expected, vcg_payment_samples
from cal.multilinear import CLOSED, EXACT, lottery_value
from cal.rounding import (
    UNASSIGNED,
    RoundingConfig,
    conditioning_lambda,
    expected_welfare,
    poisson_round_batch,
    poisson_round_plus_batch,
    realized_welfare,
)
from cal.solver import SolveConfig, solve
from cal.valuations import Additive, budget_additive_counterexample, hessian_from_table, is_negative_semidefinite
from cal.verify import (
    approximation_bound,
    brute_force_optimum,
    check_approximation,
    check_convexity,
    gradient_relerr,
    truthfulness_gaps,
    truthfulness_tolerance,
)
from helpers import DUEL_P1, ONE_MINUS_INV_E, random_feasible

pytestmark = pytest.mark.acceptance

EPS = 1e-4


def test_ac01_approximation_ratio(criterion):
    start = time.perf_counter()
    ratios = []
    for inst in corpus(2026, 100, family="mrs"):
        _, opt = brute_force_optimum(inst)
        ratios.append(check_approximation(inst, SolveConfig(EPS), opt=opt, raise_on_fail=False))
    elapsed = time.perf_counter() - start
    bound = approximation_bound(EPS)
    worst = min(ratios)
    ok = worst >= bound and elapsed < 60 and len(ratios) == 100
    criterion("AC01 approximation ratio", ok, f"min ratio {worst:.6f} >= {bound:.6f} over 100 instances in {elapsed:.1f}s")


def test_ac02_tightness(criterion):
    worst = 0.0
    for values in ((1.0,), (1.0, 1.0), (2.0, 0.5, 3.0), (1.0, 1.0, 1.0, 1.0, 1.0)):
        inst = Instance((Additive(values),))
        ratio = check_approximation(inst, SolveConfig(EPS), raise_on_fail=False)
        worst = max(worst, abs(ratio - ONE_MINUS_INV_E))
    criterion("AC02 tightness witness", worst <= 2 * EPS, f"max |ratio - (1-1/e)| = {worst:.2e} <= {2 * EPS:.0e}")


def test_ac03_convexity(criterion):
    violations = 0
    for k, inst in enumerate(corpus(303, 50, family="mrs")):
        violations += check_convexity(inst, 500, seed=k)
    ce = Instance((budget_additive_counterexample(),))
    ce_violations = check_convexity(ce, 500, seed=0, radius=0.1)
    ok = violations == 0 and ce_violations >= 1
    criterion("AC03 convexity", ok, f"{violations} violations on 50 MRS x 500 segments; {ce_violations} on the budget-additive counterexample")


def test_ac04_discrete_hessian_nsd(criterion):
    gen = np.random.default_rng(404)
    checked = failures = 0
    for _ in range(30):
        m = int(gen.integers(2, 9))
        v = random_mrs(m, gen)
        for s in range(1 << m):
            checked += 1
            failures += not is_negative_semidefinite(hessian_from_table(v.table, m, s), 1e-9)
    ce = budget_additive_counterexample()
    H = hessian_from_table(ce.table, 4, 0)
    z = np.array([1.0, 1.0, 1.0, -1.0])
    form = float(z @ H @ z)
    ok = failures == 0 and form == 1.0 and not is_negative_semidefinite(H, 1e-9)
    criterion("AC04 discrete Hessian NSD", ok, f"{failures}/{checked} MRS Hessians not NSD; counterexample z'Hz = {form:g}, rejected")


def test_ac05_gradient_oracle(criterion):
    worst = max(gradient_relerr(inst, 20, seed=k, h=1e-5) for k, inst in enumerate(corpus(505, 20, family="mixed")))
    criterion("AC05 gradient oracle", worst <= 1e-4, f"max relative error {worst:.2e} over 20 points x 20 instances")


def test_ac06_coverage_closed_form(criterion):
    gen = np.random.default_rng(606)
    worst = 0.0
    for _ in range(50):
        v = random_coverage(int(gen.integers(1, 13)), gen)
        q = gen.random(v.m)
        worst = max(worst, abs(lottery_value(v, q, CLOSED) - lottery_value(v, q, EXACT)))
    criterion("AC06 coverage closed form", worst <= 1e-10, f"max |closed - enum| = {worst:.1e} on 50 valuations")


def _joint_chi_square(x, A):
    """Per-item goodness of fit summed over independent items; cells with zero mass must stay empty."""
    n, m = x.shape
    stat, dof = 0.0, 0
    for j in range(m):
        q = -np.expm1(-x[:, j])
        probs = np.append(q, 1 - q.sum())
        counts = np.array([(A[:, j] == i).sum() for i in range(n)] + [(A[:, j] == UNASSIGNED).sum()])
        live = probs > 0
        if np.any(counts[~live]):
            return 0.0
        expected = probs[live] * A.shape[0]
        stat += float(((counts[live] - expected) ** 2 / expected).sum())
        dof += int(live.sum()) - 1
    return float(chi2.sf(stat, dof)) if dof else 1.0


def test_ac07_rounding_marginals(criterion):
    gen = np.random.default_rng(707)
    pvals = []
    for k, inst in enumerate(corpus(707, 10, family="mrs")):
        x = solve(inst, SolveConfig(EPS)).x if k % 2 else random_feasible(inst.shape, gen)
        pvals.append(_joint_chi_square(x, poisson_round_batch(x, 7000 + k, 100_000)))
    worst = min(pvals)
    criterion("AC07 rounding marginals", worst > 1e-3, f"min chi-square p-value {worst:.4f} > 1e-3 on 10 instances")


def test_ac08_modified_rounding_expectation(criterion):
    gen = np.random.default_rng(808)
    worst = 0.0
    for k, inst in enumerate(corpus(808, 4, family="mrs")):
        for mu in (0.1, 0.5):
            x = solve(inst, SolveConfig(EPS), mu=mu).x if k % 2 else random_feasible(inst.shape, gen)
            w = realized_welfare(inst, poisson_round_plus_batch(x, RoundingConfig(mu, 8000 + k), 100_000))
            z = abs(w.mean() - expected_welfare(inst, x, mu)) / (w.std(ddof=1) / math.sqrt(w.size))
            worst = max(worst, z)
    criterion("AC08 modified rounding expectation", worst <= 4, f"max |z| = {worst:.2f} <= 4 over 4 instances x mu in (0.1, 0.5)")


def test_ac09_payments(criterion):
    cfg = SolveConfig(1e-8)
    worst = 0.0
    for k, inst in enumerate(corpus(909, 20, family="mrs")):
        exp = vcg_payment_expected(inst, cfg)
        draws = vcg_payment_samples(inst, cfg, seed=k, samples=10_000)
        for i in range(inst.n):
            se = draws[:, i].std(ddof=1) / math.sqrt(draws.shape[0])
            gap = abs(draws[:, i].mean() - exp[i])
            worst = max(worst, gap / se if se > 0 else (0.0 if gap <= 1e-9 else math.inf))
    duel = Instance((Additive((2.0,)), Additive((1.0,))))
    p1 = vcg_payment_expected(duel, SolveConfig(1e-12))[0]
    ok = worst <= 4 and abs(p1 - 0.4899) <= 0.005 and abs(p1 - DUEL_P1) <= 1e-9
    criterion("AC09 payments", ok, f"max |z| = {worst:.2f} <= 4 on 20 instances; two-player E[p1] = {p1:.6f}")


def test_ac10_truthfulness(criterion):
    cfg = SolveConfig(EPS)
    worst_excess = -math.inf
    worst_gap = -math.inf
    for k, inst in enumerate(corpus(1010, 50, family="mrs")):
        gap, f_max = truthfulness_gaps(inst, cfg, seed=k)
        worst_gap = max(worst_gap, gap)
        worst_excess = max(worst_excess, gap - truthfulness_tolerance(EPS, f_max))
    criterion("AC10 truthfulness", worst_excess <= 0, f"worst misreport gain {worst_gap:.2e}; max excess over 2*eps*f_max + 1e-8 is {worst_excess:.2e}")


def test_ac11_adaptive_sampling(criterion):
    inst = Instance((Additive((2.0, 1.0)), Additive((1.0, 1.5))))
    mu = 1e-6
    runs = 10_000
    sampler = AdaptiveSampler(inst, mu, conditioning_lambda(inst, mu))
    adaptive = np.empty((runs, 2), dtype=np.int64)
    halvings = []
    for t in range(runs):
        r = sampler.sample(1111, t)
        adaptive[t] = r.allocation.assign
        halvings.extend(r.halvings)
    _, direct = midr_allocate_batch(inst, SolveConfig(1e-12), RoundingConfig(mu, 2222), runs)
    worst = 0.0
    for j in range(2):
        for outcome in (0, 1, UNASSIGNED):
            pa, pb = (adaptive[:, j] == outcome).mean(), (direct[:, j] == outcome).mean()
            se = math.sqrt((pa * (1 - pa) + pb * (1 - pb)) / runs)
            worst = max(worst, abs(pa - pb) / se)
    mean_h = float(np.mean(halvings))
    criterion("AC11 adaptive sampling", worst <= 4 and mean_h <= 2, f"max two-sample |z| = {worst:.2f} <= 4; mean halvings {mean_h:.3f} <= 2")


def test_ac12_determinism(criterion, tmp_path):
    path = tmp_path / "inst.json"
    save(corpus(1212, 1, family="mixed")[0], path)
    cmd = [sys.executable, "-m", "cal", "run", str(path), "--seed", "42", "--samples", "1000", "--tolerance", "1e-6"]
    outs = [subprocess.run(cmd, capture_output=True).stdout for _ in range(3)]
    ok = outs[0] != b"" and all(o == outs[0] for o in outs)
    criterion("AC12 determinism", ok, f"3 invocations, {len(outs[0])} bytes each, identical = {ok}")
