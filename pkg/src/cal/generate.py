"""Seeded random instance families used by the CLI and the verification corpus."""

from __future__ import annotations

import numpy as np

from .errors import InputError
from .instance import Instance
from .matroid import PartitionMatroid, UniformMatroid
from .valuations import Coverage, MatroidRankSum, Valuation, budget_additive_counterexample

FAMILIES = ("coverage", "mrs", "mixed", "counterexample")

COVER_DENSITY = 0.4
MAX_UNIVERSE = 10
MAX_TERMS = 3


def random_coverage(m: int, gen: np.random.Generator, universe: int | None = None) -> Coverage:
    L = int(universe or gen.integers(2, MAX_UNIVERSE + 1))
    hits = gen.random((m, L)) < COVER_DENSITY
    return Coverage(L, tuple(frozenset(np.flatnonzero(row).tolist()) for row in hits))


def random_matroid(m: int, gen: np.random.Generator):
    if gen.random() < 0.5:
        return UniformMatroid(m, int(gen.integers(1, m + 1)))
    nblocks = int(gen.integers(1, min(3, m) + 1))
    labels = gen.integers(0, nblocks, size=m)
    blocks = [tuple(np.flatnonzero(labels == b).tolist()) for b in range(nblocks)]
    blocks = [b for b in blocks if b]
    caps = [int(gen.integers(1, len(b) + 1)) for b in blocks]
    return PartitionMatroid(m, tuple(blocks), tuple(caps))


def random_mrs(m: int, gen: np.random.Generator) -> MatroidRankSum:
    k = int(gen.integers(1, MAX_TERMS + 1))
    terms = tuple((round(float(gen.uniform(0.25, 2.0)), 2), random_matroid(m, gen)) for _ in range(k))
    return MatroidRankSum(terms, m_hint=m)


def random_valuation(family: str, m: int, gen: np.random.Generator) -> Valuation:
    if family == "coverage":
        return random_coverage(m, gen)
    if family == "mrs":
        return random_mrs(m, gen)
    if family == "mixed":
        return random_coverage(m, gen) if gen.random() < 0.5 else random_mrs(m, gen)
    raise InputError(f"unknown family {family!r}")


def generate(family: str, n: int, m: int, seed: int) -> Instance:
    """Deterministic instance for ``(family, n, m, seed)``."""
    if family not in FAMILIES:
        raise InputError(f"family must be one of {FAMILIES}, got {family!r}")
    meta = {"family": family, "seed": int(seed)}
    if family == "counterexample":
        return Instance((budget_additive_counterexample(),), meta)
    if n < 1 or m < 1:
        raise InputError("n and m must be positive")
    gen = np.random.default_rng(seed)
    return Instance(tuple(random_valuation(family, m, gen) for _ in range(n)), meta)


def corpus(seed: int, count: int, family: str = "mrs", ns=(2, 3), ms=(3, 4, 5)) -> list[Instance]:
    """``count`` instances with sizes drawn from ``ns`` x ``ms``; instance k uses seed (seed, k)."""
    out = []
    for k in range(count):
        gen = np.random.default_rng([seed, k])
        n = int(gen.choice(ns))
        m = int(gen.choice(ms))
        sub = int(gen.integers(2**63 - 1))
        inst = generate(family, n, m, sub)
        inst.metadata.update({"corpus_seed": int(seed), "index": k})
        out.append(inst)
    return out
