"""Brute-force oracles and property checks for the mechanism's headline claims."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import CapacityError, InputError, VerificationError
from .generate import random_mrs
from .instance import Instance
from .mechanism import _Solves, vcg_payment_expected
from .multilinear import EXACT, objective
from .rounding import UNASSIGNED, Allocation, expected_welfare, player_expected_values
from .solver import SolveConfig, solve
from .valuations import Additive, Coverage, MatroidRankSum, Valuation

BRUTE_FORCE_MAX = 2**24
CHUNK = 1 << 16
APPROX_FACTOR = 1 - 1 / math.e


@dataclass
class VerificationReport:
    opt_welfare: float
    mech_expected_welfare: float
    ratio: float
    concavity_violations: int
    gradient_max_relerr: float
    truthfulness_worst_gap: float
    label: str = ""
    ratio_bound: float = float("nan")
    non_mrs: bool = False
    passed: bool = True
    failures: list[str] = field(default_factory=list)

    def to_json(self) -> dict:
        d = asdict(self)
        return {k: (None if isinstance(v, float) and math.isnan(v) else v) for k, v in d.items()}


# ------------------------------------------------------------ brute force


def brute_force_optimum(instance: Instance) -> tuple[Allocation, float]:
    """Best integral allocation by enumerating every map from items to players or nobody."""
    n, m = instance.shape
    base = n + 1
    total = base**m
    if total > BRUTE_FORCE_MAX:
        raise CapacityError(f"(n+1)^m = {total} exceeds the brute-force guard 2^24")
    tables = [v.table for v in instance.valuations]
    powers = base ** np.arange(m, dtype=np.int64)
    bits = 1 << np.arange(m, dtype=np.int64)
    best_val, best_code = -math.inf, 0
    for lo in range(0, total, CHUNK):
        codes = np.arange(lo, min(total, lo + CHUNK), dtype=np.int64)
        digits = (codes[:, None] // powers[None, :]) % base
        w = np.zeros(codes.size)
        for i, t in enumerate(tables):
            w += t[((digits == i) * bits).sum(axis=1)]
        k = int(np.argmax(w))  # first maximiser
        if w[k] > best_val:
            best_val, best_code = float(w[k]), int(codes[k])
    digits = [(best_code // base**j) % base for j in range(m)]
    assign = tuple(UNASSIGNED if d == n else int(d) for d in digits)
    return Allocation(assign, n), best_val


def approximation_bound(epsilon: float, mu: float = 0.0) -> float:
    return (1 - mu) * APPROX_FACTOR * (1 - epsilon) - 1e-9


def check_approximation(
    instance: Instance,
    cfg: SolveConfig = SolveConfig(),
    mu: float = 0.0,
    *,
    mode=EXACT,
    opt: float | None = None,
    x: np.ndarray | None = None,
    raise_on_fail: bool = True,
) -> float:
    """expected_welfare(x*, mu) / OPT, checked against (1 - mu)(1 - 1/e)(1 - eps).

    A zero-optimum instance has ratio 1 by convention.
    """
    if opt is None:
        _, opt = brute_force_optimum(instance)
    if x is None:
        x = solve(instance, cfg, mu=mu, mode=mode).x
    ew = expected_welfare(instance, x, mu, mode)
    ratio = 1.0 if opt <= 0 else ew / opt
    if raise_on_fail and ratio < approximation_bound(cfg.epsilon, mu):
        raise VerificationError(f"ratio {ratio:.9f} below {approximation_bound(cfg.epsilon, mu):.9f}")
    return ratio


# ------------------------------------------------------------ concavity


def random_feasible_points(shape: tuple[int, int], count: int, gen: np.random.Generator) -> np.ndarray:
    """Points spread over the polytope: each item's column plus slack is a Dirichlet draw."""
    n, m = shape
    cols = gen.dirichlet(np.ones(n + 1), size=(count, m))  # (count, m, n+1)
    return np.transpose(cols[..., :n], (0, 2, 1)).copy()


def midpoint_defects(instance: Instance, trials: int, seed: int = 0, radius: float = 1.0, mode=EXACT,
                     mu: float = 0.0) -> np.ndarray:
    """(f(a) + f(b))/2 - f((a+b)/2) for random segments; positive means a concavity violation.

    ``radius < 1`` shrinks both endpoints towards zero.
    """
    if trials < 0:
        raise InputError("trials must be non-negative")
    gen = np.random.default_rng(seed)
    A = radius * random_feasible_points(instance.shape, trials, gen)
    B = radius * random_feasible_points(instance.shape, trials, gen)
    out = np.empty(trials)
    for t in range(trials):
        fa = expected_welfare(instance, A[t], mu, mode)
        fb = expected_welfare(instance, B[t], mu, mode)
        fm = expected_welfare(instance, 0.5 * (A[t] + B[t]), mu, mode)
        out[t] = 0.5 * (fa + fb) - fm
    return out


def concavity_tolerance(instance: Instance, rel: float = 1e-8) -> float:
    return rel * max(1.0, instance.total_grand_value())


def check_convexity(instance: Instance, trials: int = 500, tol: float | None = None, *, seed: int = 0,
                    radius: float = 1.0, mode=EXACT) -> int:
    """Number of random segments on which the objective fails midpoint concavity by more than ``tol``."""
    if tol is None:
        tol = concavity_tolerance(instance)
    return int(np.sum(midpoint_defects(instance, trials, seed, radius, mode) > tol))


# ------------------------------------------------------------ gradient


def gradient_relerr(instance: Instance, points: int = 20, seed: int = 0, h: float = 1e-6, mode=EXACT) -> float:
    """Largest relative error of the analytic gradient against central differences.

    Points are kept at least ``h`` inside the box so both stencil points are feasible.
    """
    from .multilinear import gradient

    n, m = instance.shape
    gen = np.random.default_rng(seed)
    scale = max(1.0, instance.total_grand_value())
    worst = 0.0
    for x in random_feasible_points((n, m), points, gen):
        x = h + (1 - (n + 2) * h) * x
        g = gradient(instance, x, mode)
        for i in range(n):
            for j in range(m):
                e = np.zeros_like(x)
                e[i, j] = h
                fd = (objective(instance, x + e, mode) - objective(instance, x - e, mode)) / (2 * h)
                denom = max(abs(fd), 1e-6 * scale)
                worst = max(worst, abs(g[i, j] - fd) / denom)
    return worst


# ------------------------------------------------------------ truthfulness


def _deletions(v: Valuation) -> list[tuple[str, Valuation]]:
    if isinstance(v, MatroidRankSum):
        return [(f"drop_term_{k}", v.without_term(k)) for k in range(len(v.terms))]
    if isinstance(v, Coverage):
        out = []
        for e in range(v.universe):
            covers = tuple(c - {e} for c in v.covers)
            out.append((f"drop_element_{e}", Coverage(v.universe, covers)))
        return out
    if isinstance(v, Additive):
        out = []
        for j in range(v.m):
            vals = list(v.values)
            vals[j] = 0.0
            out.append((f"zero_item_{j}", Additive(tuple(vals))))
        return out
    return []


def deviation_family(instance: Instance, i: int, seed: int = 0) -> list[tuple[str, Valuation]]:
    """Fixed misreports for player ``i``.

    Scalings by 0, 0.5 and 2; every single-term deletion (an MRS term, a
    coverage element, or one additive item); a swap to each other player's
    valuation; and one random MRS valuation seeded by ``(seed, i)``.
    """
    v = instance.valuations[i]
    out: list[tuple[str, Valuation]] = [(f"scale_{c:g}", v.scaled(c)) for c in (0.0, 0.5, 2.0)]
    out += _deletions(v)
    out += [(f"swap_{k}", instance.valuations[k]) for k in range(instance.n) if k != i]
    out.append(("random_mrs", random_mrs(instance.m, np.random.default_rng([seed, i]))))
    return out


def truthfulness_tolerance(epsilon: float, f_max: float) -> float:
    return 2 * epsilon * f_max + 1e-8


def truthfulness_gaps(instance: Instance, cfg: SolveConfig = SolveConfig(), *, seed: int = 0, mode=EXACT,
                      family=None) -> tuple[float, float]:
    """Worst E[u_i(misreport)] - E[u_i(truth)] and the largest optimum value seen.

    Utilities use the player's true valuation on the allocation distribution
    chosen for the reported profile, minus the closed-form expected payment
    of that profile.  ``family`` maps ``(instance, i)`` to labelled misreports.
    """
    family = family or (lambda inst, i: deviation_family(inst, i, seed))
    truth = _Solves(instance, cfg, 0.0, mode, False)
    f_max = truth.get(None).value
    pay_truth = vcg_payment_expected(instance, cfg, cache=truth)
    ev_truth = player_expected_values(instance, truth.get(None).x, 0.0, mode)
    worst = -math.inf
    for i in range(instance.n):
        u_truth = ev_truth[i] - pay_truth[i]
        for _, v_dev in family(instance, i):
            reported = instance.with_valuation(i, v_dev)
            dev = _Solves(reported, cfg, 0.0, mode, False)
            if i in truth._cache:
                # the counterfactual drops player i, so it ignores i's report
                dev._cache[i] = truth._cache[i]
            x_dev = dev.get(None).x
            f_max = max(f_max, dev.get(None).value)
            pay = vcg_payment_expected(reported, cfg, cache=dev, players=[i])[i]
            u_dev = player_expected_values(instance, x_dev, 0.0, mode)[i] - pay
            worst = max(worst, u_dev - u_truth)
    return worst, f_max


def check_truthfulness(instance: Instance, deviation_family=None, cfg: SolveConfig = SolveConfig(), *,
                       seed: int = 0, mode=EXACT, raise_on_fail: bool = True) -> float:
    """Worst utility gain from a documented misreport, checked against 2 eps f_max + 1e-8."""
    worst, f_max = truthfulness_gaps(instance, cfg, seed=seed, mode=mode, family=deviation_family)
    if raise_on_fail and worst > truthfulness_tolerance(cfg.epsilon, f_max):
        raise VerificationError(f"misreport gains {worst:.3g} > {truthfulness_tolerance(cfg.epsilon, f_max):.3g}")
    return worst


# ------------------------------------------------------------ full report


def verify_instance(instance: Instance, cfg: SolveConfig = SolveConfig(), *, trials: int = 100, seed: int = 0,
                    label: str = "", mode=EXACT, gradient_points: int = 5) -> VerificationReport:
    """Every check on one instance, collected without raising.

    Non-MRS instances are solved anyway so the report can show what goes
    wrong; for them a concavity violation is the expected finding and not a
    failure, and the truthfulness check is skipped.
    """
    non_mrs = not instance.is_mrs
    _, opt = brute_force_optimum(instance)
    res = solve(instance, cfg, mode=mode, allow_non_mrs=non_mrs)
    ew = expected_welfare(instance, res.x, 0.0, mode)
    ratio = 1.0 if opt <= 0 else ew / opt
    radius = 0.1 if non_mrs else 1.0
    violations = check_convexity(instance, trials, seed=seed, radius=radius, mode=mode)
    relerr = gradient_relerr(instance, gradient_points, seed=seed, mode=mode)
    report = VerificationReport(
        opt_welfare=opt,
        mech_expected_welfare=ew,
        ratio=ratio,
        concavity_violations=violations,
        gradient_max_relerr=relerr,
        truthfulness_worst_gap=float("nan"),
        label=label,
        ratio_bound=approximation_bound(cfg.epsilon),
        non_mrs=non_mrs,
    )
    if non_mrs:
        return report
    worst, f_max = truthfulness_gaps(instance, cfg, seed=seed, mode=mode)
    report.truthfulness_worst_gap = worst
    if ratio < report.ratio_bound:
        report.failures.append("approximation")
    if violations:
        report.failures.append("concavity")
    if relerr > 1e-4:
        report.failures.append("gradient")
    if worst > truthfulness_tolerance(cfg.epsilon, f_max):
        report.failures.append("truthfulness")
    report.passed = not report.failures
    return report
