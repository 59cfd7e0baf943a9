"""Matroids over item indices ``0..m-1`` with independence and rank oracles.

Four closed families are supported (uniform, partition, graphic and
contraction) plus :class:`OracleMatroid`, which wraps an arbitrary
independence callback and exists mainly so the axiom checker can be pointed
at deliberately broken oracles.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import CapacityError, InputError

AXIOM_CHECK_MAX_ITEMS = 16
TABLE_MAX_ITEMS = 20


def _as_items(S: Iterable[int], ground: frozenset[int]) -> frozenset[int]:
    items = frozenset(int(j) for j in S)
    bad = items - ground
    if bad:
        raise InputError(f"items {sorted(bad)} are outside the ground set")
    return items


def popcount(masks: np.ndarray) -> np.ndarray:
    return np.bitwise_count(np.asarray(masks, dtype=np.uint64)).astype(np.int64)


def all_masks(m: int) -> np.ndarray:
    if m > TABLE_MAX_ITEMS:
        raise CapacityError(f"subset tables need m <= {TABLE_MAX_ITEMS}, got {m}")
    return np.arange(1 << m, dtype=np.uint64)


def mask_of(S: Iterable[int]) -> int:
    out = 0
    for j in S:
        out |= 1 << int(j)
    return out


class Matroid:
    """Common interface.  Subclasses implement ``_independent``."""

    m: int

    @property
    def ground_set(self) -> frozenset[int]:
        return frozenset(range(self.m))

    def _independent(self, S: frozenset[int]) -> bool:
        raise NotImplementedError

    def is_independent(self, S: Iterable[int]) -> bool:
        return self._independent(_as_items(S, self.ground_set))

    def rank(self, A: Iterable[int]) -> int:
        """Size of a maximum independent subset of ``A`` (greedy, exact for matroids)."""
        A = _as_items(A, self.ground_set)
        basis: set[int] = set()
        for j in sorted(A):
            if self._independent(frozenset(basis | {j})):
                basis.add(j)
        return len(basis)

    def rank_table(self) -> np.ndarray:
        """Rank of every subset of ``0..m-1`` indexed by bitmask (bit j = item j)."""
        masks = all_masks(self.m)
        out = np.empty(masks.size, dtype=np.int64)
        # rank(S) = rank(S - top) + [top extends a basis of S - top]; keep one basis per mask
        bases = [0] * masks.size
        out[0] = 0
        for s in range(1, masks.size):
            top = s.bit_length() - 1
            rest = s ^ (1 << top)
            cand = bases[rest] | (1 << top)
            if self._independent(frozenset(_bits(cand))):
                bases[s] = cand
                out[s] = out[rest] + 1
            else:
                bases[s] = bases[rest]
                out[s] = out[rest]
        return out

    def to_json(self) -> dict:
        raise NotImplementedError


def _bits(mask: int) -> list[int]:
    out = []
    j = 0
    while mask:
        if mask & 1:
            out.append(j)
        mask >>= 1
        j += 1
    return out


@dataclass(frozen=True)
class UniformMatroid(Matroid):
    m: int
    k: int

    def __post_init__(self):
        if self.m < 1:
            raise InputError("ground set must be non-empty")
        if not 0 <= self.k <= self.m:
            raise InputError(f"uniform cap k={self.k} must lie in [0, {self.m}]")

    def _independent(self, S):
        return len(S) <= self.k

    def rank(self, A):
        return min(len(_as_items(A, self.ground_set)), self.k)

    def rank_table(self):
        return np.minimum(popcount(all_masks(self.m)), self.k)

    def to_json(self):
        return {"kind": "uniform", "m": self.m, "k": self.k}


@dataclass(frozen=True)
class PartitionMatroid(Matroid):
    """At most ``caps[b]`` items from each block.  Items in no block are loops."""

    m: int
    blocks: tuple[tuple[int, ...], ...]
    caps: tuple[int, ...]

    def __post_init__(self):
        blocks = tuple(tuple(sorted(int(j) for j in b)) for b in self.blocks)
        caps = tuple(int(c) for c in self.caps)
        object.__setattr__(self, "blocks", blocks)
        object.__setattr__(self, "caps", caps)
        if self.m < 1:
            raise InputError("ground set must be non-empty")
        if len(blocks) != len(caps):
            raise InputError("caps length must equal block count")
        if any(c < 0 for c in caps):
            raise InputError("caps must be non-negative")
        seen: set[int] = set()
        for b in blocks:
            for j in b:
                if not 0 <= j < self.m:
                    raise InputError(f"block item {j} outside [0, {self.m})")
                if j in seen:
                    raise InputError(f"item {j} appears in more than one block")
                seen.add(j)

    @cached_property
    def _block_of(self) -> dict[int, int]:
        return {j: b for b, block in enumerate(self.blocks) for j in block}

    def _independent(self, S):
        counts = [0] * len(self.blocks)
        for j in S:
            b = self._block_of.get(j)
            if b is None:
                return False
            counts[b] += 1
            if counts[b] > self.caps[b]:
                return False
        return True

    def rank_table(self):
        masks = all_masks(self.m)
        out = np.zeros(masks.size, dtype=np.int64)
        for block, cap in zip(self.blocks, self.caps):
            bm = np.uint64(mask_of(block))
            out += np.minimum(popcount(masks & bm), cap)
        return out

    def to_json(self):
        return {
            "kind": "partition",
            "m": self.m,
            "blocks": [list(b) for b in self.blocks],
            "caps": list(self.caps),
        }


@dataclass(frozen=True)
class GraphicMatroid(Matroid):
    """Cycle matroid of a multigraph; item ``j`` is ``edges[j]``."""

    vertices: int
    edges: tuple[tuple[int, int], ...]
    m: int = field(init=False)

    def __post_init__(self):
        edges = tuple((int(u), int(v)) for u, v in self.edges)
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "m", len(edges))
        if not edges:
            raise InputError("graphic matroid needs at least one edge")
        for u, v in edges:
            if not (0 <= u < self.vertices and 0 <= v < self.vertices):
                raise InputError(f"edge ({u}, {v}) references a missing vertex")

    def _independent(self, S):
        parent = list(range(self.vertices))

        def find(a):
            while parent[a] != a:
                parent[a] = parent[parent[a]]
                a = parent[a]
            return a

        for j in S:
            u, v = self.edges[j]
            ru, rv = find(u), find(v)
            if ru == rv:
                return False
            parent[ru] = rv
        return True

    def to_json(self):
        return {"kind": "graphic", "vertices": self.vertices, "edges": [list(e) for e in self.edges]}


@dataclass(frozen=True)
class ContractedMatroid(Matroid):
    """``base / contracted``.  Item indices are inherited from the base; the
    contracted items are not part of the ground set."""

    base: Matroid
    contracted: frozenset[int]

    def __post_init__(self):
        C = frozenset(int(j) for j in self.contracted)
        object.__setattr__(self, "contracted", C)
        if not C <= self.base.ground_set:
            raise InputError("contracted set must be a subset of the base ground set")

    @property
    def m(self) -> int:
        return self.base.m

    @property
    def ground_set(self):
        return self.base.ground_set - self.contracted

    @cached_property
    def _base_rank_C(self) -> int:
        return self.base.rank(self.contracted)

    def _independent(self, S):
        return self.base.rank(self.contracted | S) - self._base_rank_C == len(S)

    def rank_table(self):
        raise InputError("a contraction's ground set is not 0..m-1; use base.rank_table()")

    def to_json(self):
        return {"kind": "contracted", "base": self.base.to_json(), "contracted": sorted(self.contracted)}


@dataclass(frozen=True)
class OracleMatroid(Matroid):
    """Independence given by a callback.  Nothing guarantees the axioms hold."""

    m: int
    oracle: Callable[[frozenset[int]], bool]

    def _independent(self, S):
        return bool(self.oracle(S))


def is_independent(M: Matroid, S: Iterable[int]) -> bool:
    return M.is_independent(S)


def rank(M: Matroid, A: Iterable[int]) -> int:
    return M.rank(A)


def check_matroid_axioms(M: Matroid) -> bool:
    """Exhaustively test non-emptiness, downward closure and exchange.

    Exchange is checked in its ``|S| = |T| + 1`` form, which is equivalent
    once downward closure holds.
    """
    ground = sorted(M.ground_set)
    k = len(ground)
    if k > AXIOM_CHECK_MAX_ITEMS:
        raise CapacityError(f"axiom check enumerates 2^{k} sets; limit is {AXIOM_CHECK_MAX_ITEMS} items")
    # local bitmasks over the (possibly non-contiguous) ground set
    indep = np.zeros(1 << k, dtype=bool)
    for s in range(1 << k):
        indep[s] = M._independent(frozenset(ground[b] for b in _bits(s)))
    if not indep[0]:
        return False
    for s in np.flatnonzero(indep):
        s = int(s)
        for b in _bits(s):
            if not indep[s ^ (1 << b)]:
                return False

    masks = np.arange(1 << k, dtype=np.int64)
    sizes = popcount(masks)
    ind_masks = masks[indep]
    ind_sizes = sizes[indep]
    # ext[T]: items x with T + x independent
    ext = np.zeros(1 << k, dtype=np.int64)
    for b in range(k):
        bit = 1 << b
        has = (masks & bit) != 0
        ext |= np.where(~has & indep[masks | bit], bit, 0)
    for size in range(int(ind_sizes.max(initial=0))):
        Ts = ind_masks[ind_sizes == size]
        Ss = ind_masks[ind_sizes == size + 1]
        if Ss.size == 0:
            continue
        for T in Ts:
            if np.any((Ss & ~T & ext[T]) == 0):
                return False
    return True


# ---------------------------------------------------------------- JSON codec


def matroid_from_json(d: dict) -> Matroid:
    kind = d.get("kind")
    try:
        if kind == "uniform":
            return UniformMatroid(int(d["m"]), int(d["k"]))
        if kind == "partition":
            return PartitionMatroid(int(d["m"]), tuple(tuple(b) for b in d["blocks"]), tuple(d["caps"]))
        if kind == "graphic":
            return GraphicMatroid(int(d["vertices"]), tuple(tuple(e) for e in d["edges"]))
        if kind == "contracted":
            return ContractedMatroid(matroid_from_json(d["base"]), frozenset(d["contracted"]))
    except (KeyError, TypeError) as exc:
        raise InputError(f"malformed {kind} matroid: {exc}") from exc
    raise InputError(f"unknown matroid kind {kind!r}")


def matroid_to_json(M: Matroid) -> dict:
    return M.to_json()


def free_matroid_on(m: int, items: Sequence[int]) -> PartitionMatroid:
    """Rank = number of ``items`` in the argument (each item its own block, cap 1)."""
    return PartitionMatroid(m, tuple((j,) for j in items), tuple(1 for _ in items))
