"""Poisson rounding, its modified form with cancellation, and their expectations.

Item ``j`` of sample ``t`` under seed ``s`` is decided by draw ``t`` of the
substream ``(s, "item", j)``; the cancellation coin, the lucky-winner coin
and the winner index of the modified scheme use the substreams
``(s, "cancel")``, ``(s, "lucky")`` and ``(s, "winner")``.  A batch of
``count`` samples is therefore exactly the first ``count`` single draws, and
any one item's decision can be replayed in isolation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import rng
from .errors import DegenerateConditioningError, InputError
from .instance import Instance
from .multilinear import EXACT, is_feasible, objective, poisson_probs, G_value

UNASSIGNED = -1


@dataclass(frozen=True)
class Allocation:
    """``assign[j]`` is the player receiving item ``j``, or ``UNASSIGNED``."""

    assign: tuple[int, ...]
    n: int

    def __post_init__(self):
        assign = tuple(int(a) for a in self.assign)
        object.__setattr__(self, "assign", assign)
        if any(not (a == UNASSIGNED or 0 <= a < self.n) for a in assign):
            raise InputError("assignment refers to a non-existent player")

    @property
    def m(self) -> int:
        return len(self.assign)

    def bundles(self) -> list[frozenset[int]]:
        out: list[set[int]] = [set() for _ in range(self.n)]
        for j, a in enumerate(self.assign):
            if a != UNASSIGNED:
                out[a].add(j)
        return [frozenset(b) for b in out]

    def indicator(self) -> np.ndarray:
        x = np.zeros((self.n, self.m))
        for j, a in enumerate(self.assign):
            if a != UNASSIGNED:
                x[a, j] = 1.0
        return x

    def welfare(self, instance: Instance) -> float:
        return instance.welfare(self.bundles())

    def to_json(self) -> list:
        return [None if a == UNASSIGNED else a for a in self.assign]


@dataclass(frozen=True)
class RoundingConfig:
    mu: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if not 0 <= self.mu < 1:
            raise InputError("mu must lie in [0, 1)")


def _check(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim != 2:
        raise InputError("a fractional allocation is a 2-D array")
    if not is_feasible(x):
        raise InputError("fractional allocation is infeasible")
    return x


def assign_from_uniforms(x, p) -> np.ndarray:
    """Minimum-index rule: the first player whose cumulative probability reaches ``p_j``.

    ``p`` has shape ``(count, m)``; returns integer assignments of the same shape.
    """
    cum = np.cumsum(poisson_probs(x), axis=0)  # (n, m)
    p = np.asarray(p, dtype=float)
    reach = cum[None, :, :] >= p[:, None, :]
    first = np.argmax(reach, axis=1)
    return np.where(reach.any(axis=1), first, UNASSIGNED)


def item_uniforms(seed: int, m: int, count: int, start: int = 0) -> np.ndarray:
    return np.stack([rng.uniforms(seed, "item", j, count, start) for j in range(m)], axis=1)


def poisson_round_batch(x, seed: int, count: int, start: int = 0) -> np.ndarray:
    """Samples ``start..start+count-1`` of Poisson rounding, shape ``(count, m)``."""
    x = _check(x)
    return assign_from_uniforms(x, item_uniforms(seed, x.shape[1], count, start))


def poisson_round(x, seed: int) -> Allocation:
    """Give item j to player i with probability 1 - exp(-x_ij), independently across items."""
    x = _check(x)
    return Allocation(tuple(poisson_round_batch(x, seed, 1)[0]), x.shape[0])


def plus_postprocess(tentative: np.ndarray, n: int, mu: float, seed: int, start: int = 0) -> np.ndarray:
    """Cancellation / lucky-winner step applied to a batch of tentative assignments."""
    tentative = np.asarray(tentative)
    count, m = tentative.shape
    if mu == 0:
        return tentative.copy()
    beta = (tentative != UNASSIGNED).sum(axis=1) / m
    q1 = rng.uniforms(seed, "cancel", 0, count, start)
    q2 = rng.uniforms(seed, "lucky", 0, count, start)
    winner = rng.stream(seed, "winner", 0).integers(0, n, size=start + count)[start:]
    out = tentative.copy()
    cancel = q1 < mu
    lucky = cancel & (q2 < beta)
    out[cancel] = UNASSIGNED
    out[lucky] = winner[lucky, None]
    return out


def poisson_round_plus_batch(x, cfg: RoundingConfig, count: int, start: int = 0) -> np.ndarray:
    x = _check(x)
    tentative = poisson_round_batch(x, cfg.seed, count, start)
    return plus_postprocess(tentative, x.shape[0], cfg.mu, cfg.seed, start)


def poisson_round_plus(x, cfg: RoundingConfig) -> Allocation:
    """Poisson rounding, then with probability mu cancel and, with probability
    equal to the allocated fraction, hand every item to one uniformly random player."""
    x = _check(x)
    return Allocation(tuple(poisson_round_plus_batch(x, cfg, 1)[0]), x.shape[0])


# ------------------------------------------------------------ expectations


def bundle_masks(assignments: np.ndarray, n: int) -> np.ndarray:
    """Bitmask of each player's bundle, shape ``(count, n)``."""
    A = np.asarray(assignments)
    bits = 1 << np.arange(A.shape[-1], dtype=np.int64)
    return np.stack([((A == i) * bits).sum(axis=-1) for i in range(n)], axis=-1)


def player_values(instance: Instance, assignments: np.ndarray) -> np.ndarray:
    """v_i(S_i) for each sampled assignment, shape ``(count, n)``."""
    masks = bundle_masks(assignments, instance.n)
    return np.stack([v.table[masks[:, i]] for i, v in enumerate(instance.valuations)], axis=1)


def realized_welfare(instance: Instance, assignments: np.ndarray) -> np.ndarray:
    return player_values(instance, assignments).sum(axis=1)


def player_expected_values(instance: Instance, x, mu: float = 0.0, mode=EXACT) -> np.ndarray:
    """E[v_i(S_i)] for each player under the modified scheme with cancellation ``mu``.

    Player i gains (1 - mu) G_{v_i}(x_i) from the tentative allocation plus
    mu * E[beta] * v_i([m]) / n from being the lucky winner.
    """
    x = _check(x)
    if x.shape != instance.shape:
        raise InputError(f"allocation has shape {x.shape}, expected {instance.shape}")
    n, m = instance.shape
    base = np.array([G_value(v, x[i], mode) for i, v in enumerate(instance.valuations)])
    if mu == 0:
        return base
    mean_beta = float(poisson_probs(x).sum()) / m
    grand = np.array([v.grand_value for v in instance.valuations])
    return (1 - mu) * base + mu * mean_beta * grand / n


def expected_welfare(instance: Instance, x, mu: float = 0.0, mode=EXACT) -> float:
    """(1 - mu) f(x) + mu / (m n) * sum_i v_i([m]) * sum_ij (1 - exp(-x_ij))."""
    if not 0 <= mu < 1:
        raise InputError("mu must lie in [0, 1)")
    f = objective(instance, x, mode)
    if mu == 0:
        return f
    n, m = instance.shape
    noise = math.fsum(poisson_probs(x).ravel())
    return (1 - mu) * f + mu / (m * n) * instance.total_grand_value() * noise


def conditioning_lambda(instance: Instance, mu: float) -> float:
    """Guaranteed curvature of the modified expected welfare along any unit direction.

    The noise term's second derivative in x_ij is -c exp(-x_ij) with
    c = mu * sum_i v_i([m]) / (m n), and exp(-x_ij) >= 1/e on the box.
    """
    if mu <= 0:
        raise DegenerateConditioningError("mu = 0 gives no curvature guarantee")
    n, m = instance.shape
    lam = mu * instance.total_grand_value() / (math.e * m * n)
    if lam <= 0:
        raise DegenerateConditioningError("all valuations are zero; curvature vanishes")
    return lam
