"""Lottery-value oracles, the Poisson-composed objective and its derivatives.

``F_v(q)`` is the expected value of ``v`` on a random bundle containing item
``j`` independently with probability ``q_j`` (the multilinear extension).
``G_v(x) = F_v(1 - exp(-x))`` is a player's expected value under Poisson
rounding, and the relaxation objective is ``f(x) = sum_i G_{v_i}(x_i)``.

Three oracle modes exist and callers pick one explicitly:

* ``"exact_enum"`` sums over all 2^m bundles (m <= 20).
* ``"closed_form"`` uses the product formula for coverage and additive bodies.
* ``"sampled"`` is a Monte Carlo estimate, kept for diagnostics only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import rng as _rng
from .errors import CapacityError, InputError, UnsupportedModeError
from .valuations import Additive, Coverage, Valuation

EXACT = "exact_enum"
CLOSED = "closed_form"
SAMPLED = "sampled"

ENUM_MAX_ITEMS = 20
HESSIAN_MAX_ITEMS = 12
FEAS_TOL = 1e-12


@dataclass(frozen=True)
class Sampled:
    """Mode value for Monte Carlo evaluation."""

    samples: int
    seed: int = 0

    def __post_init__(self):
        if self.samples < 1:
            raise InputError("sampled mode needs samples >= 1")


def _check_probs(q: np.ndarray, m: int) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    if q.shape[-1] != m:
        raise InputError(f"probability vector has length {q.shape[-1]}, expected {m}")
    if np.any(q < 0) or np.any(q > 1) or not np.all(np.isfinite(q)):
        raise InputError("probabilities must lie in [0, 1]")
    return q


def subset_weights(q: np.ndarray) -> np.ndarray:
    """Probabilities of every bundle under the product lottery ``q``.

    Accepts a batch of shape ``(..., m)`` and returns ``(..., 2^m)`` with bit
    ``j`` of the last index marking membership of item ``j``.
    """
    q = np.asarray(q, dtype=float)
    w = np.ones(q.shape[:-1] + (1,))
    for j in range(q.shape[-1]):
        qj = q[..., j : j + 1]
        w = np.concatenate([w * (1.0 - qj), w * qj], axis=-1)
    return w


def _require_enum(v: Valuation):
    if v.m > ENUM_MAX_ITEMS:
        raise CapacityError(f"exact enumeration needs m <= {ENUM_MAX_ITEMS}, got {v.m}")


def _closed_form(v: Valuation, q: np.ndarray) -> np.ndarray:
    if isinstance(v, Coverage):
        out = np.zeros(q.shape[:-1])
        for items in v.coverers():
            if items:
                out = out + (1.0 - np.prod(1.0 - q[..., items], axis=-1))
        return out
    if isinstance(v, Additive):
        return q @ np.asarray(v.values)
    raise UnsupportedModeError(f"no closed form for {type(v).__name__}")


def lottery_value(v: Valuation, q, mode=EXACT) -> float:
    """F_v(q) under the requested oracle mode."""
    q = _check_probs(q, v.m)
    if q.ndim != 1:
        raise InputError("lottery_value takes a single probability vector")
    if mode == EXACT:
        _require_enum(v)
        return math.fsum(subset_weights(q) * v.table)
    if mode == CLOSED:
        return float(_closed_form(v, q))
    if isinstance(mode, Sampled):
        return _sampled(v, q, mode)
    raise UnsupportedModeError(f"unknown mode {mode!r}")


def _sampled(v: Valuation, q: np.ndarray, mode: Sampled) -> float:
    gen = _rng.stream(mode.seed, "lottery")
    draws = gen.random((mode.samples, v.m)) < q
    if v.m <= ENUM_MAX_ITEMS:
        masks = draws @ (1 << np.arange(v.m, dtype=np.int64))
        return float(np.mean(v.table[masks]))
    return float(np.mean([v.value(np.flatnonzero(row)) for row in draws]))


def lottery_values(v: Valuation, Q, mode=EXACT) -> np.ndarray:
    """Batched F_v over the leading axes of ``Q`` (exact or closed form only)."""
    Q = _check_probs(Q, v.m)
    if mode == EXACT:
        _require_enum(v)
        return subset_weights(Q) @ v.table
    if mode == CLOSED:
        return _closed_form(v, Q)
    raise UnsupportedModeError(f"batched evaluation does not support {mode!r}")


def poisson_probs(x) -> np.ndarray:
    """Per-item inclusion probabilities 1 - exp(-x) under Poisson rounding."""
    return -np.expm1(-np.asarray(x, dtype=float))


def _check_row(x_row, m: int) -> np.ndarray:
    x = np.asarray(x_row, dtype=float)
    if x.shape != (m,):
        raise InputError(f"row has shape {x.shape}, expected ({m},)")
    if np.any(x < 0) or np.any(x > 1) or not np.all(np.isfinite(x)):
        raise InputError("row entries must lie in [0, 1]")
    return x


def G_value(v: Valuation, x_row, mode=EXACT) -> float:
    """Expected value of ``v`` when item ``j`` is kept with probability 1 - exp(-x_j).

    The enumeration path builds bundle weights from ``exp(-x)`` directly
    instead of going through :func:`lottery_value`.
    """
    x = _check_row(x_row, v.m)
    if mode != EXACT:
        return lottery_value(v, poisson_probs(x), mode)
    _require_enum(v)
    keep = -np.expm1(-x)
    drop = np.exp(-x)
    w = np.ones(1)
    for j in range(v.m):
        w = np.concatenate([w * drop[j], w * keep[j]])
    return math.fsum(w * v.table)


def check_feasible(instance, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape != instance.shape:
        raise InputError(f"allocation has shape {x.shape}, expected {instance.shape}")
    if not is_feasible(x):
        raise InputError("fractional allocation is infeasible")
    return x


def is_feasible(x, tol: float = FEAS_TOL) -> bool:
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        return False
    if np.any(x < -tol) or np.any(x > 1 + tol):
        return False
    return bool(np.all(x.sum(axis=0) <= 1 + tol))


def objective(instance, x, mode=EXACT) -> float:
    """f(x) = sum_i G_{v_i}(x_i): expected welfare of Poisson rounding at x."""
    x = check_feasible(instance, x)
    return math.fsum(G_value(v, x[i], mode) for i, v in enumerate(instance.valuations))


def player_gradient(v: Valuation, x_row, mode=EXACT) -> np.ndarray:
    """dG_v/dx_j = exp(-x_j) * (F_v(q with q_j=1) - F_v(q with q_j=0)), q = 1 - exp(-x).

    Two lottery-value queries per item.  ``x_row`` may carry leading batch axes.
    """
    x = np.asarray(x_row, dtype=float)
    m = v.m
    q = poisson_probs(x)
    up = np.repeat(q[..., None, :], m, axis=-2)
    down = up.copy()
    diag = np.arange(m)
    up[..., diag, diag] = 1.0
    down[..., diag, diag] = 0.0
    F = lottery_values(v, np.concatenate([up, down], axis=-2), mode)
    return np.exp(-x) * (F[..., :m] - F[..., m:])


def gradient(instance, x, mode=EXACT) -> np.ndarray:
    x = check_feasible(instance, x)
    return np.stack([player_gradient(v, x[i], mode) for i, v in enumerate(instance.valuations)])


def exact_hessian_G(v: Valuation, x_row) -> np.ndarray:
    """Hessian of G_v as the weighted sum of discrete Hessians over all bundles."""
    m = v.m
    if m > HESSIAN_MAX_ITEMS:
        raise CapacityError(f"exact Hessian needs m <= {HESSIAN_MAX_ITEMS}, got {m}")
    x = np.asarray(x_row, dtype=float)
    if x.shape != (m,):
        raise InputError(f"row has shape {x.shape}, expected ({m},)")
    w = subset_weights(poisson_probs(x))
    t = v.table
    S = np.arange(1 << m)
    bits = 1 << np.arange(m)
    single = t[S[:, None] | bits[None, :]]
    pair = t[S[:, None, None] | bits[None, :, None] | bits[None, None, :]]
    H = pair - single[:, :, None] - single[:, None, :] + t[S][:, None, None]
    return np.einsum("s,sjk->jk", w, H)
