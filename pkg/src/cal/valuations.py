"""Set-function valuations, discrete Hessians and the NSD certificate.

All valuations are immutable.  ``value`` evaluates a single bundle directly
from the model; ``table`` evaluates every bundle at once (indexed by bitmask,
bit ``j`` = item ``j``) and is what the enumeration oracles consume.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

from .errors import InputError
from .matroid import (
    ContractedMatroid,
    Matroid,
    all_masks,
    mask_of,
    matroid_from_json,
    popcount,
)


def _items(S: Iterable[int], m: int) -> frozenset[int]:
    items = frozenset(int(j) for j in S)
    for j in items:
        if not 0 <= j < m:
            raise InputError(f"item {j} outside [0, {m})")
    return items


def _subset_sums(values: np.ndarray) -> np.ndarray:
    out = np.zeros(1, dtype=float)
    for val in values:
        out = np.concatenate([out, out + val])
    return out


class Valuation:
    """Base class.  ``is_mrs`` marks membership in the matroid-rank-sum class."""

    m: int
    is_mrs: bool = True

    def value(self, S: Iterable[int]) -> float:
        raise NotImplementedError

    def _table(self) -> np.ndarray:
        masks = all_masks(self.m)
        return np.array([self.value(_mask_items(int(s))) for s in masks], dtype=float)

    @cached_property
    def table(self) -> np.ndarray:
        t = self._table()
        t.setflags(write=False)
        return t

    @property
    def grand_value(self) -> float:
        """v([m])."""
        return self.value(range(self.m))

    def scaled(self, c: float) -> "Valuation":
        raise NotImplementedError

    def to_json(self) -> dict:
        raise NotImplementedError


def _mask_items(mask: int) -> list[int]:
    return [j for j in range(mask.bit_length()) if mask >> j & 1]


@dataclass(frozen=True)
class Coverage(Valuation):
    """v(S) = |union of covers[j] for j in S| over a universe ``0..universe-1``."""

    universe: int
    covers: tuple[frozenset[int], ...]

    def __post_init__(self):
        covers = tuple(frozenset(int(e) for e in c) for c in self.covers)
        object.__setattr__(self, "covers", covers)
        if not covers:
            raise InputError("coverage valuation needs at least one item")
        for c in covers:
            if any(not 0 <= e < self.universe for e in c):
                raise InputError(f"cover element outside universe of size {self.universe}")

    @property
    def m(self):
        return len(self.covers)

    def value(self, S):
        covered: set[int] = set()
        for j in _items(S, self.m):
            covered |= self.covers[j]
        return float(len(covered))

    def _table(self):
        if self.universe > 63:
            return super()._table()
        cov = np.zeros(1, dtype=np.uint64)
        for c in self.covers:
            cov = np.concatenate([cov, cov | np.uint64(mask_of(c))])
        return popcount(cov).astype(float)

    def coverers(self) -> list[list[int]]:
        """For each universe element, the items covering it."""
        out: list[list[int]] = [[] for _ in range(self.universe)]
        for j, c in enumerate(self.covers):
            for e in c:
                out[e].append(j)
        return out

    def scaled(self, c):
        return MatroidRankSum(tuple((c * w, M) for w, M in self.as_mrs().terms))

    def as_mrs(self) -> "MatroidRankSum":
        """Each universe element contributes a rank-1 uniform matroid on its coverers."""
        from .matroid import PartitionMatroid

        terms = []
        for items in self.coverers():
            if items:
                terms.append((1.0, PartitionMatroid(self.m, (tuple(items),), (1,))))
        return MatroidRankSum(tuple(terms), m_hint=self.m)

    def to_json(self):
        return {"type": "coverage", "universe": self.universe, "covers": [sorted(c) for c in self.covers]}


@dataclass(frozen=True)
class MatroidRankSum(Valuation):
    """v(S) = sum_l w_l * rank_l(S) with non-negative weights."""

    terms: tuple[tuple[float, Matroid], ...]
    m_hint: int | None = None

    def __post_init__(self):
        terms = tuple((float(w), M) for w, M in self.terms)
        object.__setattr__(self, "terms", terms)
        if not terms and self.m_hint is None:
            raise InputError("an MRS valuation with no terms needs m_hint")
        ms = {M.m for _, M in terms}
        if self.m_hint is not None:
            ms.add(int(self.m_hint))
        if len(ms) != 1:
            raise InputError(f"MRS terms disagree on the item count: {sorted(ms)}")
        for w, M in terms:
            if w < 0 or not np.isfinite(w):
                raise InputError(f"MRS weights must be finite and non-negative, got {w}")
            if isinstance(M, ContractedMatroid):
                raise InputError("a contraction does not live on all m items; it cannot be a valuation term")

    @property
    def m(self):
        return self.m_hint if self.m_hint is not None else self.terms[0][1].m

    def value(self, S):
        S = _items(S, self.m)
        return float(sum(w * M.rank(S) for w, M in self.terms))

    def _table(self):
        out = np.zeros(1 << self.m, dtype=float)
        for w, M in self.terms:
            out += w * M.rank_table()
        return out

    def scaled(self, c):
        return MatroidRankSum(tuple((c * w, M) for w, M in self.terms), m_hint=self.m)

    def without_term(self, index: int) -> "MatroidRankSum":
        terms = self.terms[:index] + self.terms[index + 1 :]
        return MatroidRankSum(terms, m_hint=self.m)

    def to_json(self):
        return {
            "type": "mrs",
            "m": self.m,
            "terms": [{"weight": w, "matroid": M.to_json()} for w, M in self.terms],
        }


@dataclass(frozen=True)
class BudgetAdditive(Valuation):
    """v(S) = min(budget, sum of item values).  Submodular but not MRS in general."""

    values: tuple[float, ...]
    budget: float
    is_mrs = False

    def __post_init__(self):
        vals = tuple(float(v) for v in self.values)
        object.__setattr__(self, "values", vals)
        if not vals:
            raise InputError("budget-additive valuation needs at least one item")
        if any(v < 0 for v in vals) or self.budget < 0:
            raise InputError("item values and budget must be non-negative")

    @property
    def m(self):
        return len(self.values)

    def value(self, S):
        return float(min(self.budget, sum(self.values[j] for j in _items(S, self.m))))

    def _table(self):
        return np.minimum(_subset_sums(np.array(self.values)), self.budget)

    def scaled(self, c):
        return BudgetAdditive(tuple(c * v for v in self.values), c * self.budget)

    def to_json(self):
        return {"type": "budget_additive", "values": list(self.values), "budget": self.budget}


@dataclass(frozen=True)
class Additive(Valuation):
    values: tuple[float, ...]

    def __post_init__(self):
        vals = tuple(float(v) for v in self.values)
        object.__setattr__(self, "values", vals)
        if not vals:
            raise InputError("additive valuation needs at least one item")
        if any(v < 0 for v in vals):
            raise InputError("additive values must be non-negative")

    @property
    def m(self):
        return len(self.values)

    def value(self, S):
        return float(sum(self.values[j] for j in _items(S, self.m)))

    def _table(self):
        return _subset_sums(np.array(self.values))

    def scaled(self, c):
        return Additive(tuple(c * v for v in self.values))

    def to_json(self):
        return {"type": "additive", "values": list(self.values)}


def zero_valuation(m: int) -> Additive:
    return Additive((0.0,) * m)


def budget_additive_counterexample() -> BudgetAdditive:
    """Three unit "small" items, one "big" item worth 2, budget 2."""
    return BudgetAdditive((1.0, 1.0, 1.0, 2.0), 2.0)


def value(v: Valuation, S: Iterable[int]) -> float:
    return v.value(S)


# ---------------------------------------------------------- discrete Hessian


@dataclass(frozen=True)
class DiscreteHessian:
    S: frozenset[int]
    H: np.ndarray


def discrete_hessian(v: Valuation, S: Iterable[int]) -> DiscreteHessian:
    """H(j,k) = v(S+j+k) - v(S+j) - v(S+k) + v(S), evaluated by value queries."""
    S = _items(S, v.m)
    m = v.m
    base = v.value(S)
    single = [v.value(S | {j}) for j in range(m)]
    H = np.empty((m, m))
    for j in range(m):
        for k in range(j, m):
            h = v.value(S | {j, k}) - single[j] - single[k] + base
            H[j, k] = H[k, j] = h
    return DiscreteHessian(S, H)


def hessian_from_table(table: np.ndarray, m: int, S_mask: int) -> np.ndarray:
    """Same matrix as :func:`discrete_hessian` but read off a precomputed table."""
    bits = np.array([1 << j for j in range(m)], dtype=np.int64)
    single = table[S_mask | bits]
    pair = table[S_mask | bits[:, None] | bits[None, :]]
    return pair - single[:, None] - single[None, :] + table[S_mask]


def is_negative_semidefinite(H, tol: float = 1e-9) -> bool:
    """All eigenvalues <= tol * max(1, ||H||_inf)."""
    H = np.asarray(H, dtype=float)
    if H.ndim != 2 or H.shape[0] != H.shape[1]:
        raise InputError("expected a square matrix")
    scale = max(1.0, float(np.abs(H).sum(axis=1).max(initial=0.0)))
    if np.abs(H - H.T).max(initial=0.0) > tol * scale:
        raise InputError("matrix is not symmetric")
    if H.size == 0:
        return True
    eig = np.linalg.eigvalsh(0.5 * (H + H.T))
    return bool(eig.max() <= tol * scale)


def mrs_hessian_structure_check(v: Valuation | Matroid, S: Iterable[int]) -> bool:
    """Check the block structure of a single rank function's discrete Hessian.

    ``-H`` must be a 0/1 symmetric, transitive relation whose support is the
    set of items with unit marginal at ``S``, and whose off-diagonal ones
    mark pairs that are dependent in the contraction by ``S``.
    """
    if isinstance(v, Matroid):
        M, w = v, 1.0
    elif isinstance(v, MatroidRankSum) and len(v.terms) == 1:
        w, M = v.terms[0]
    else:
        raise InputError("structure check needs a single matroid rank term")
    if w == 0:
        return True
    m = M.m
    S = _items(S, m)
    r = M.rank
    H = np.empty((m, m))
    for j in range(m):
        for k in range(m):
            H[j, k] = r(S | {j, k}) - r(S | {j}) - r(S | {k}) + r(S)
    N = -H
    if not np.all((N == 0) | (N == 1)):
        return False
    if not np.array_equal(N, N.T):
        return False
    rS = r(S)
    unit = np.array([r(S | {j}) == rS + 1 for j in range(m)])
    if not np.array_equal(np.diag(N).astype(bool), unit):
        return False
    for j in range(m):
        for k in range(m):
            if N[j, k] and not (unit[j] and unit[k]):
                return False
            if j != k and unit[j] and unit[k]:
                dependent = r(S | {j, k}) - rS < 2
                if bool(N[j, k]) != dependent:
                    return False
    B = N.astype(bool)
    # transitivity: B o B subset of B
    return not np.any((B.astype(int) @ B.astype(int) > 0) & ~B)


def is_monotone_normalized(v: Valuation) -> bool:
    t = v.table
    if t[0] != 0:
        return False
    for j in range(v.m):
        bit = 1 << j
        idx = np.arange(t.size)
        without = idx[(idx & bit) == 0]
        if np.any(t[without | bit] < t[without] - 1e-12):
            return False
    return True


# ---------------------------------------------------------------- JSON codec


def valuation_from_json(d: dict, m: int | None = None) -> Valuation:
    kind = d.get("type")
    try:
        if kind == "coverage":
            return Coverage(int(d["universe"]), tuple(frozenset(c) for c in d["covers"]))
        if kind == "mrs":
            terms = tuple((float(t["weight"]), matroid_from_json(t["matroid"])) for t in d["terms"])
            hint = d.get("m", m)
            return MatroidRankSum(terms, m_hint=None if hint is None else int(hint))
        if kind == "budget_additive":
            return BudgetAdditive(tuple(d["values"]), float(d["budget"]))
        if kind == "additive":
            return Additive(tuple(d["values"]))
    except (KeyError, TypeError) as exc:
        raise InputError(f"malformed {kind} valuation: {exc}") from exc
    raise InputError(f"unknown valuation type {kind!r}")


def valuation_to_json(v: Valuation) -> dict:
    return v.to_json()


def weighted_sum(parts: Sequence[tuple[float, Valuation]]) -> MatroidRankSum:
    """Non-negative combination of MRS-representable valuations as one MRS."""
    terms = []
    m = None
    for c, v in parts:
        m = v.m
        if isinstance(v, MatroidRankSum):
            terms += [(c * w, M) for w, M in v.terms]
        elif isinstance(v, Coverage):
            terms += [(c * w, M) for w, M in v.as_mrs().terms]
        elif isinstance(v, Additive):
            from .matroid import free_matroid_on

            terms += [(c * val, free_matroid_on(v.m, [j])) for j, val in enumerate(v.values) if val]
        else:
            raise InputError(f"{type(v).__name__} is not MRS-representable")
    return MatroidRankSum(tuple(terms), m_hint=m)
