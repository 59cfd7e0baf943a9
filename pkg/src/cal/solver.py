"""Concave maximisation over the fractional-allocation polytope.

The feasible set ``{x in [0,1]^{n x m} : sum_i x_ij <= 1}`` is a product of
``m`` simplices whose vertices give item ``j`` to one player or to nobody.
Linear optimisation over it is trivial, so an away-step conditional
gradient method is used.  Concavity makes the Frank-Wolfe gap
``<grad f(x), s - x>`` an upper bound on ``max f - f(x)``; the solve stops
once that gap is at most ``epsilon * f(x)``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Protocol

import numpy as np

from .errors import ConvergenceError, InputError, NonMRSError
from .instance import Instance
from .multilinear import EXACT, FEAS_TOL, is_feasible, lottery_values, player_gradient, poisson_probs

log = logging.getLogger(__name__)

LINE_SEARCH_POINTS = 10
LINE_SEARCH_ROUNDS = 20
SLACK_TOL = 1e-13


@dataclass(frozen=True)
class SolveConfig:
    epsilon: float = 1e-4
    max_iters: int = 20000
    lambda_hint: float | None = None

    def __post_init__(self):
        if not self.epsilon > 0:
            raise InputError("epsilon must be positive")
        if self.max_iters < 1:
            raise InputError("max_iters must be >= 1")
        if self.lambda_hint is not None and self.lambda_hint < 0:
            raise InputError("lambda_hint must be non-negative")


class ConcaveObjective(Protocol):
    shape: tuple[int, int]
    upper_bound: float

    def value(self, x: np.ndarray) -> float: ...

    def values(self, X: np.ndarray) -> np.ndarray: ...

    def gradient(self, x: np.ndarray) -> np.ndarray: ...

    def gradients(self, X: np.ndarray) -> np.ndarray: ...


class WelfareObjective:
    """Expected welfare of the (modified) Poisson rounding scheme.

    With ``mu == 0`` this is ``f(x) = sum_i G_{v_i}(x_i)``.  With ``mu > 0``
    it is ``(1 - mu) f(x) + mu / (m n) * sum_i v_i([m]) * sum_ij (1 - exp(-x_ij))``.
    """

    def __init__(self, instance: Instance, mu: float = 0.0, mode=EXACT):
        if not 0 <= mu < 1:
            raise InputError("mu must lie in [0, 1)")
        self.instance = instance
        self.mu = float(mu)
        self.mode = mode
        self.shape = instance.shape
        self.upper_bound = instance.total_grand_value()
        n, m = self.shape
        self._noise = self.mu * self.upper_bound / (m * n)

    def values(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        Q = poisson_probs(X)
        total = np.zeros(X.shape[:-2])
        for i, v in enumerate(self.instance.valuations):
            total = total + lottery_values(v, Q[..., i, :], self.mode)
        if self.mu:
            total = (1 - self.mu) * total + self._noise * Q.sum(axis=(-2, -1))
        return total

    def value(self, x: np.ndarray) -> float:
        return float(self.values(x))

    def gradients(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        g = np.stack(
            [player_gradient(v, X[..., i, :], self.mode) for i, v in enumerate(self.instance.valuations)],
            axis=-2,
        )
        if self.mu:
            g = (1 - self.mu) * g + self._noise * np.exp(-X)
        return g

    def gradient(self, x: np.ndarray) -> np.ndarray:
        return self.gradients(x)


@dataclass
class SolveResult:
    x: np.ndarray
    value: float
    gap: float
    iterations: int
    history: list[float] = field(default_factory=list, repr=False)

    def __iter__(self):
        return iter((self.x, self.value, self.gap))


def feasible(x, shape: tuple[int, int] | None = None) -> bool:
    """Box and column-sum constraints within 1e-12."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 2:
        raise InputError("a fractional allocation is a 2-D array")
    if shape is not None and x.shape != tuple(shape):
        raise InputError(f"allocation has shape {x.shape}, expected {tuple(shape)}")
    return is_feasible(x)


def linear_maximize(g) -> np.ndarray:
    """Vertex maximising <g, x>: each item to its highest positive bidder (lowest index on ties)."""
    g = np.asarray(g, dtype=float)
    s = np.zeros_like(g)
    best = np.argmax(g, axis=0)  # argmax returns the first maximiser
    cols = np.arange(g.shape[1])
    pos = g[best, cols] > 0
    s[best[pos], cols[pos]] = 1.0
    return s


def _clean(x: np.ndarray) -> np.ndarray:
    np.clip(x, 0.0, 1.0, out=x)
    col = x.sum(axis=0)
    over = col > 1.0
    if np.any(over):
        if np.any(col[over] > 1.0 + FEAS_TOL):
            raise InputError("iterate left the polytope")
        x[:, over] /= col[over]
    return x


def _slopes(obj, x, d, ts):
    X = x[None] + ts[:, None, None] * d[None]
    np.clip(X, 0.0, 1.0, out=X)
    batch = getattr(obj, "gradients", None)
    G = batch(X) if batch is not None else np.array([obj.gradient(Xi) for Xi in X])
    return np.einsum("kij,ij->k", G, d)


def _line_search(obj, x, d, gmax, slope0, tol=0.0):
    """Step length maximising the concave map t -> f(x + t d) on [0, gmax].

    Brackets the zero of the directional derivative, which is decreasing in
    ``t``, by repeated grid refinement and finishes with a secant step.
    Working on slopes rather than values keeps the step accurate far below
    the resolution of ``f`` itself.  Refinement stops early once the value
    still attainable inside the bracket, at most ``(hi - lo) * slope(lo)``,
    drops below ``tol``.
    """
    end = _slopes(obj, x, d, np.array([gmax]))[0]
    if end >= 0:
        return gmax
    lo, hi, s_lo, s_hi = 0.0, gmax, slope0, end
    for _ in range(LINE_SEARCH_ROUNDS):
        if hi - lo <= 1e-15 * gmax or (hi - lo) * s_lo <= tol:
            break
        ts = np.linspace(lo, hi, LINE_SEARCH_POINTS)[1:-1]
        sl = _slopes(obj, x, d, ts)
        pos = np.flatnonzero(sl > 0)
        k = pos[-1] + 1 if pos.size else 0
        if k > 0:
            lo, s_lo = ts[k - 1], sl[k - 1]
        if k < ts.size:
            hi, s_hi = ts[k], sl[k]
    return float(lo + (hi - lo) * s_lo / (s_lo - s_hi))


def _away_vertex(x: np.ndarray, g: np.ndarray):
    """Per item, the active vertex with the smallest gradient value and its weight."""
    n, m = x.shape
    slack = 1.0 - x.sum(axis=0)
    # candidates 0..n-1 are players, n is "unassigned" with gradient value 0
    scores = np.vstack([g, np.zeros((1, m))])
    # slack below SLACK_TOL is floating-point residue, not an active vertex
    active = np.vstack([x > 0, (slack > SLACK_TOL)[None]])
    scores = np.where(active, scores, np.inf)
    a = np.argmin(scores, axis=0)
    weights = np.where(a < n, x[np.minimum(a, n - 1), np.arange(m)], slack)
    A = np.zeros_like(x)
    players = a < n
    A[a[players], np.arange(m)[players]] = 1.0
    return a, A, weights


def _as_objective(problem, mu, mode, allow_non_mrs):
    if isinstance(problem, Instance):
        if not problem.is_mrs and not allow_non_mrs:
            bad = [i for i, v in enumerate(problem.valuations) if not v.is_mrs]
            raise NonMRSError(f"players {bad} have non-MRS valuations; pass allow_non_mrs=True to override")
        return WelfareObjective(problem, mu=mu, mode=mode)
    if mu:
        raise InputError("mu applies only when solving an Instance")
    return problem


def solve(
    problem,
    cfg: SolveConfig = SolveConfig(),
    *,
    mu: float = 0.0,
    mode=EXACT,
    allow_non_mrs: bool = False,
    x0: np.ndarray | None = None,
) -> SolveResult:
    """Maximise the objective to relative accuracy ``cfg.epsilon``.

    ``problem`` is an :class:`Instance` (maximising the expected welfare of
    Poisson rounding, or of the modified scheme when ``mu > 0``) or any
    object following :class:`ConcaveObjective`.  Starts from the zero matrix
    unless ``x0`` is given.
    """
    obj = _as_objective(problem, mu, mode, allow_non_mrs)
    n, m = obj.shape
    if x0 is None:
        x = np.zeros((n, m))
    else:
        x = np.array(x0, dtype=float)
        if x.shape != (n, m) or not is_feasible(x):
            raise InputError("warm start must be a feasible allocation of the right shape")
    fx = obj.value(x)
    history = [fx]
    gap = np.inf
    for it in range(cfg.max_iters):
        g = obj.gradient(x)
        s = linear_maximize(g)
        gap = float(np.sum(g * (s - x)))
        if gap <= cfg.epsilon * fx:
            log.debug("certified after %d iterations: f=%.12g gap=%.3g", it, fx, gap)
            return SolveResult(x, fx, max(gap, 0.0), it, history)

        a, A, alpha = _away_vertex(x, g)
        away_gap = float(np.sum(g * (x - A)))
        if gap >= away_gap:
            d = s - x
            gmax = 1.0
            drop = None
            slope0 = gap
        else:
            d = x - A
            slope0 = away_gap
            moving = alpha < 1.0
            ratios = np.where(moving, alpha / np.where(moving, 1.0 - alpha, 1.0), np.inf)
            gmax = float(ratios.min())
            drop = np.flatnonzero(ratios == gmax)

        # step accuracy well inside the certificate target
        t = _line_search(obj, x, d, gmax, slope0, tol=1e-2 * cfg.epsilon * abs(fx))
        if t <= 0.0:
            break
        x_prev = x
        x = x + t * d
        if drop is not None and t == gmax:
            for j in drop:
                if a[j] < n:
                    x[a[j], j] = 0.0
                else:
                    col = x[:, j].sum()
                    if col > 0:
                        x[:, j] /= col
        x = _clean(x)
        f_new = obj.value(x)
        # decreases within float noise of f are accepted; real losses undo the step
        if f_new < fx - 1e-15 * max(1.0, abs(fx)):
            log.debug("line search lost %.3g; stopping", fx - f_new)
            x = x_prev
            break
        fx = f_new
        history.append(fx)

    raise ConvergenceError(
        f"no certificate after {len(history) - 1} steps (gap {gap:.3g}, f {fx:.6g}, target {cfg.epsilon * fx:.3g})",
        x=x,
        value=fx,
        gap=gap,
        iterations=len(history) - 1,
    )


def epsilon_for_delta(delta: float, lam: float, upper_bound: float) -> float:
    """Relative accuracy that pins the optimiser to within ``delta`` in Euclidean norm.

    From f(x*) - f(x) >= lam/2 ||x - x*||^2 and f(x*) <= upper_bound.
    """
    return delta * delta * lam / (2.0 * upper_bound)


def solve_to_delta(
    problem,
    delta: float,
    lam: float,
    *,
    mu: float = 0.0,
    mode=EXACT,
    max_iters: int = 200000,
    x0: np.ndarray | None = None,
    allow_non_mrs: bool = False,
) -> np.ndarray:
    """Return ``x`` with ``||x - x*|| <= delta`` for a ``lam``-strongly concave objective."""
    return solve_to_delta_result(
        problem, delta, lam, mu=mu, mode=mode, max_iters=max_iters, x0=x0, allow_non_mrs=allow_non_mrs
    ).x


def solve_to_delta_result(problem, delta, lam, *, mu=0.0, mode=EXACT, max_iters=200000, x0=None,
                          allow_non_mrs=False) -> SolveResult:
    if not delta > 0:
        raise InputError("delta must be positive")
    if not lam > 0:
        raise InputError("lambda must be positive")
    obj = _as_objective(problem, mu, mode, allow_non_mrs)
    if obj.upper_bound <= 0:
        x = np.zeros(obj.shape)
        return SolveResult(x, 0.0, 0.0, 0)
    eps = min(epsilon_for_delta(delta, lam, obj.upper_bound), 0.5)
    return solve(obj, SolveConfig(epsilon=eps, max_iters=max_iters, lambda_hint=lam), x0=x0)
