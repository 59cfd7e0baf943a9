"""Maximal-in-distributional-range allocation with Poisson rounding and VCG payments.

The allocation rule solves for the fractional point whose Poisson rounding
has the largest expected welfare, then rounds it.  Because the range of
output distributions does not depend on the reports, charging each player
the externality it imposes makes the mechanism truthful in expectation.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import rng
from .errors import ConvergenceError, InputError
from .instance import Instance
from .multilinear import EXACT, poisson_probs
from .rounding import (
    UNASSIGNED,
    Allocation,
    RoundingConfig,
    assign_from_uniforms,
    player_expected_values,
    player_values,
    plus_postprocess,
    poisson_round_plus,
    poisson_round_plus_batch,
)
from .solver import SolveConfig, SolveResult, solve, solve_to_delta_result

log = logging.getLogger(__name__)

DELTA_FLOOR = 1e-12


@dataclass(frozen=True)
class SolverReport:
    value: float
    gap_bound: float
    iterations: int

    def to_json(self) -> dict:
        return {"f_star": self.value, "gap_bound": self.gap_bound, "iterations": self.iterations}


@dataclass
class MechanismOutcome:
    allocation: Allocation
    sampled_payments: np.ndarray
    sampled_stderr: np.ndarray
    expected_payments: np.ndarray
    solver_report: SolverReport
    welfare_realized: float
    x: np.ndarray = field(repr=False)
    samples: int = 0

    def to_json(self) -> dict:
        return {
            "allocation": self.allocation.to_json(),
            "bundles": [sorted(b) for b in self.allocation.bundles()],
            "welfare_realized": self.welfare_realized,
            "expected_payments": [float(p) for p in self.expected_payments],
            "sampled_payments": {
                "samples": self.samples,
                "mean": [float(p) for p in self.sampled_payments],
                "stderr": [float(s) for s in self.sampled_stderr],
            },
            "solver": self.solver_report.to_json(),
            "x_star": [[float(v) for v in row] for row in self.x],
        }


class _Solves:
    """Memoised solves of the full profile and of each profile with one player zeroed."""

    def __init__(self, instance: Instance, cfg: SolveConfig, mu: float, mode, allow_non_mrs: bool):
        self.instance = instance
        self.cfg = cfg
        self.mu = mu
        self.mode = mode
        self.allow_non_mrs = allow_non_mrs
        self._cache: dict = {}

    def get(self, zeroed: int | None = None) -> SolveResult:
        if zeroed not in self._cache:
            inst = self.instance if zeroed is None else self.instance.zeroed(zeroed)
            self._cache[zeroed] = solve(inst, self.cfg, mu=self.mu, mode=self.mode, allow_non_mrs=self.allow_non_mrs)
        return self._cache[zeroed]


def _solves(instance, cfg, rcfg, mode, allow_non_mrs, cache):
    if cache is not None:
        return cache
    return _Solves(instance, cfg, rcfg.mu, mode, allow_non_mrs)


def midr_allocate(
    instance: Instance,
    cfg: SolveConfig = SolveConfig(),
    rcfg: RoundingConfig = RoundingConfig(),
    *,
    mode=EXACT,
    allow_non_mrs: bool = False,
) -> tuple[np.ndarray, Allocation]:
    """Solve for the best rounding input x* and sample an allocation from it."""
    res = solve(instance, cfg, mu=rcfg.mu, mode=mode, allow_non_mrs=allow_non_mrs)
    return res.x, poisson_round_plus(res.x, rcfg)


def midr_allocate_batch(instance, cfg, rcfg, count: int, *, mode=EXACT, allow_non_mrs=False):
    """``count`` independent allocations from one solve; row t equals the seed's t-th draw."""
    res = solve(instance, cfg, mu=rcfg.mu, mode=mode, allow_non_mrs=allow_non_mrs)
    return res.x, poisson_round_plus_batch(res.x, rcfg, count)


# ------------------------------------------------------------ adaptive sampling


@dataclass
class AdaptiveResult:
    allocation: Allocation
    halvings: np.ndarray  # per item
    exhausted: list[int]  # items committed at the precision floor


class AdaptiveSampler:
    """Poisson rounding at the exact optimum of the conditioned objective.

    Item ``j`` draws ``p_j`` and compares it with the cumulative rounded
    probabilities of an approximate optimiser ``x~`` known to lie within
    ``delta`` of ``x*``.  Each cumulative sum is then within ``n * delta`` of
    its exact value, so the decision is safe unless ``p_j`` is that close to
    some threshold; in that case ``delta`` is halved and ``x~`` refined.

    Approximations are cached per precision level and each level is
    warm-started from the previous one, so every level is a deterministic
    function of the instance and repeated draws reuse the same solves.
    """

    def __init__(self, instance: Instance, mu: float, lam: float, *, mode=EXACT, max_iters: int = 20000,
                 allow_non_mrs: bool = False):
        if not lam > 0:
            raise InputError("lambda must be positive")
        if not 0 <= mu < 1:
            raise InputError("mu must lie in [0, 1)")
        self.instance = instance
        self.mu = mu
        self.lam = lam
        self.mode = mode
        self.max_iters = max_iters
        self.allow_non_mrs = allow_non_mrs
        self.delta0 = 1.0 / (2 * instance.n**2)
        self._levels: list[np.ndarray] = []
        self._floor: int | None = None  # first level the solver could not certify

    def level(self, k: int) -> tuple[np.ndarray, bool]:
        """Approximation for ``delta0 / 2**k`` and whether it is certified."""
        while len(self._levels) <= k and self._floor is None:
            k_new = len(self._levels)
            delta = self.delta0 / 2**k_new
            warm = self._levels[-1] if self._levels else None
            try:
                res = solve_to_delta_result(
                    self.instance, delta, self.lam, mu=self.mu, mode=self.mode, max_iters=self.max_iters,
                    x0=warm, allow_non_mrs=self.allow_non_mrs,
                )
                self._levels.append(res.x)
            except ConvergenceError as exc:
                log.info("precision floor reached at delta=%.3g: %s", delta, exc)
                self._floor = k_new
                if warm is None:
                    self._levels.append(exc.x)
                    return exc.x, False
        if self._floor is not None and k >= self._floor:
            return self._levels[-1], False
        return self._levels[k], True

    def decide(self, j: int, p: float) -> tuple[int, int, bool]:
        """Assignment of item ``j`` for uniform draw ``p``, the halvings used, and whether precision ran out."""
        n = self.instance.n
        k = 0
        while True:
            x, certified = self.level(k)
            delta = self.delta0 / 2**k
            cum = np.cumsum(poisson_probs(x[:, j]))
            ambiguous = bool(np.any(np.abs(p - cum) <= delta * n))
            if not ambiguous:
                break
            if not certified or delta / 2 < DELTA_FLOOR:
                a = assign_from_uniforms(x[:, j : j + 1], np.array([[p]]))[0, 0]
                return int(a), k, True
            k += 1
        a = assign_from_uniforms(x[:, j : j + 1], np.array([[p]]))[0, 0]
        return int(a), k, False

    def sample(self, seed: int, index: int = 0) -> AdaptiveResult:
        """Draw number ``index`` under ``seed``, using the same item streams as Poisson rounding."""
        m = self.instance.m
        tentative = np.empty(m, dtype=np.int64)
        halvings = np.zeros(m, dtype=np.int64)
        exhausted = []
        for j in range(m):
            p = rng.uniforms(seed, "item", j, 1, index)[0]
            a, h, ex = self.decide(j, p)
            tentative[j] = a
            halvings[j] = h
            if ex:
                exhausted.append(j)
        final = plus_postprocess(tentative[None], self.instance.n, self.mu, seed, index)[0]
        return AdaptiveResult(Allocation(tuple(final), self.instance.n), halvings, exhausted)


def allocate_adaptive(instance: Instance, rcfg: RoundingConfig, lam: float, *, mode=EXACT,
                      allow_non_mrs: bool = False) -> AdaptiveResult:
    """Sample the modified rounding of the exact optimiser, refining precision only where needed."""
    return AdaptiveSampler(instance, rcfg.mu, lam, mode=mode, allow_non_mrs=allow_non_mrs).sample(rcfg.seed)


# ------------------------------------------------------------ payments


def vcg_payment_samples(
    instance: Instance,
    cfg: SolveConfig = SolveConfig(),
    rcfg: RoundingConfig = RoundingConfig(),
    seed: int = 0,
    samples: int | None = None,
    *,
    mode=EXACT,
    allow_non_mrs: bool = False,
    cache: _Solves | None = None,
) -> np.ndarray:
    """Unbiased payment draws: others' value without player i minus others' value with i.

    The counterfactual run (player i reported as zero) and the actual run use
    independent streams derived from ``seed``.  Returns shape ``(n,)`` for a
    single draw, or ``(samples, n)``.
    """
    n = instance.n
    count = 1 if samples is None else int(samples)
    if count < 1:
        raise InputError("samples must be >= 1")
    out = np.zeros((count, n))
    if n > 1:
        solves = _solves(instance, cfg, rcfg, mode, allow_non_mrs, cache)
        x_full = solves.get(None).x
        for i in range(n):
            x_cf = solves.get(i).x
            T = poisson_round_plus_batch(x_cf, RoundingConfig(rcfg.mu, rng.derive_seed(seed, "counterfactual", i)), count)
            S = poisson_round_plus_batch(x_full, RoundingConfig(rcfg.mu, rng.derive_seed(seed, "actual", i)), count)
            others = np.arange(n) != i
            vT = player_values(instance, T)[:, others].sum(axis=1)
            vS = player_values(instance, S)[:, others].sum(axis=1)
            out[:, i] = vT - vS
    return out[0] if samples is None else out


def vcg_payment_expected(
    instance: Instance,
    cfg: SolveConfig = SolveConfig(),
    rcfg: RoundingConfig = RoundingConfig(),
    *,
    mode=EXACT,
    allow_non_mrs: bool = False,
    cache: _Solves | None = None,
    players=None,
) -> np.ndarray:
    """Closed-form expected payments.

    E[p_i] = sum_{k != i} EV_k(x^(i)) - sum_{k != i} EV_k(x*), where x^(i)
    solves the profile with player i zeroed and EV_k is player k's expected
    value under the (modified) rounding.  ``players`` restricts which
    entries are computed; the others are left at zero.
    """
    n = instance.n
    out = np.zeros(n)
    if n == 1:
        return out
    solves = _solves(instance, cfg, rcfg, mode, allow_non_mrs, cache)
    ev_full = player_expected_values(instance, solves.get(None).x, rcfg.mu, mode)
    for i in range(n) if players is None else players:
        ev_cf = player_expected_values(instance, solves.get(i).x, rcfg.mu, mode)
        others = np.arange(n) != i
        out[i] = math.fsum(ev_cf[others]) - math.fsum(ev_full[others])
    return out


def run_mechanism(
    instance: Instance,
    cfg: SolveConfig = SolveConfig(),
    rcfg: RoundingConfig = RoundingConfig(),
    seed: int = 0,
    samples: int = 10000,
    *,
    mode=EXACT,
    allow_non_mrs: bool = False,
) -> MechanismOutcome:
    """Allocation, sampled and expected payments, and solver diagnostics.

    Randomness comes from ``seed`` through the labelled sub-seeds
    ``"round"`` (the emitted allocation) and ``"payments"`` (payment draws).
    """
    if samples < 1:
        raise InputError("samples must be >= 1")
    solves = _Solves(instance, cfg, rcfg.mu, mode, allow_non_mrs)
    res = solves.get(None)
    alloc = poisson_round_plus(res.x, RoundingConfig(rcfg.mu, rng.derive_seed(seed, "round")))
    draws = vcg_payment_samples(instance, cfg, rcfg, rng.derive_seed(seed, "payments"), samples, cache=solves)
    expected = vcg_payment_expected(instance, cfg, rcfg, cache=solves)
    mean = draws.mean(axis=0)
    stderr = draws.std(axis=0, ddof=1) / math.sqrt(samples) if samples > 1 else np.zeros(instance.n)
    return MechanismOutcome(
        allocation=alloc,
        sampled_payments=mean,
        sampled_stderr=stderr,
        expected_payments=expected,
        solver_report=SolverReport(res.value, res.gap, res.iterations),
        welfare_realized=alloc.welfare(instance),
        x=res.x,
        samples=samples,
    )


__all__ = [
    "UNASSIGNED",
    "AdaptiveResult",
    "AdaptiveSampler",
    "MechanismOutcome",
    "SolverReport",
    "allocate_adaptive",
    "midr_allocate",
    "midr_allocate_batch",
    "run_mechanism",
    "vcg_payment_expected",
    "vcg_payment_samples",
]
