import math

import numpy as np
import pytest

from cal.errors import CapacityError, VerificationError
from cal.generate import corpus, random_mrs
from cal.instance import Instance
from cal.solver import SolveConfig
from cal.valuations import Additive, Coverage, zero_valuation
from cal.verify import (
    VerificationReport,
    brute_force_optimum,
    check_approximation,
    check_convexity,
    check_truthfulness,
    deviation_family,
    gradient_relerr,
    verify_instance,
)
from helpers import DUEL_FSTAR, ONE_MINUS_INV_E


def test_brute_force_examples(duel):
    a, opt = brute_force_optimum(duel)
    assert opt == 2 and a.assign == (0,)
    a, opt = brute_force_optimum(Instance((Additive((2.0, 0.0)), Additive((0.0, 3.0)))))
    assert opt == 5 and a.assign == (0, 1)
    # both players reach the lone element only through item 0
    same = Coverage(1, (frozenset({0}), frozenset()))
    assert brute_force_optimum(Instance((same, same)))[1] == 1


def test_brute_force_matches_naive_enumeration():
    import itertools

    gen = np.random.default_rng(3)
    inst = Instance(tuple(random_mrs(4, gen) for _ in range(2)))
    best = 0.0
    for assign in itertools.product(range(-1, 2), repeat=4):
        bundles = [[j for j, a in enumerate(assign) if a == i] for i in range(2)]
        best = max(best, inst.welfare(bundles))
    assert brute_force_optimum(inst)[1] == pytest.approx(best, abs=1e-12)


def test_brute_force_guard():
    inst = Instance((Additive((1.0,) * 25),))
    with pytest.raises(CapacityError):
        brute_force_optimum(inst)


def test_approximation_examples(duel):
    single = Instance((Additive((1.0, 2.0, 0.5)),))
    eps = 1e-4
    assert abs(check_approximation(single, SolveConfig(eps)) - ONE_MINUS_INV_E) <= 2 * eps
    assert check_approximation(duel, SolveConfig(1e-12)) == pytest.approx(DUEL_FSTAR / 2, abs=1e-12)
    assert check_approximation(Instance((zero_valuation(2),)), SolveConfig(eps)) == 1.0


def test_approximation_raises_below_bound(duel):
    with pytest.raises(VerificationError):
        check_approximation(duel, SolveConfig(1e-4), x=np.zeros((2, 1)))


def test_convexity_examples(counterexample_instance):
    gen = np.random.default_rng(1)
    inst = Instance(tuple(random_mrs(4, gen) for _ in range(3)))
    assert check_convexity(inst, 500) == 0
    assert check_convexity(Instance((Additive((1.0, 2.0)), Additive((3.0, 0.5)))), 500) == 0
    assert check_convexity(counterexample_instance, 500, radius=0.1) >= 1


def test_gradient_relerr_small():
    inst = corpus(2, 1)[0]
    assert gradient_relerr(inst, 5) <= 1e-4


def test_deviation_family_members(duel):
    labels = [label for label, _ in deviation_family(duel, 0)]
    assert labels == ["scale_0", "scale_0.5", "scale_2", "zero_item_0", "swap_1", "random_mrs"]
    inst = corpus(4, 1)[0]
    fam = deviation_family(inst, 0)
    assert sum(label.startswith("drop_term") for label, _ in fam) == len(inst.valuations[0].terms)
    assert all(v.m == inst.m for _, v in fam)
    cov = Instance((Coverage(3, (frozenset({0, 1}), frozenset({2}))),) * 2)
    assert sum(label.startswith("drop_element") for label, _ in deviation_family(cov, 1)) == 3


def test_truthfulness_examples(duel):
    eps = 1e-8
    tol = 2 * eps * 2 * DUEL_FSTAR + 1e-8
    assert check_truthfulness(duel, cfg=SolveConfig(eps)) <= tol
    single = Instance((Additive((1.0, 2.0)),))
    assert check_truthfulness(single, cfg=SolveConfig(eps)) <= 2 * eps * 3 + 1e-8
    zero_only = lambda inst, i: [("zero", zero_valuation(inst.m))]
    assert check_truthfulness(duel, zero_only, SolveConfig(eps)) <= 0


def test_truthfulness_detects_a_broken_mechanism(duel, monkeypatch):
    # charging nothing breaks truthfulness: overbidding then wins more value for free
    import cal.verify as verify

    monkeypatch.setattr(verify, "vcg_payment_expected", lambda inst, cfg=None, **k: np.zeros(inst.n))
    with pytest.raises(VerificationError):
        check_truthfulness(duel, cfg=SolveConfig(1e-8))


def test_verify_instance_reports(counterexample_instance):
    rep = verify_instance(corpus(1, 1)[0], trials=50)
    assert rep.passed and rep.ratio >= rep.ratio_bound and rep.concavity_violations == 0
    assert rep.ratio == rep.mech_expected_welfare / rep.opt_welfare
    rep = verify_instance(counterexample_instance, trials=100)
    assert rep.non_mrs and rep.concavity_violations >= 1 and rep.passed
    d = rep.to_json()
    assert d["truthfulness_worst_gap"] is None
    assert set(VerificationReport.__dataclass_fields__) <= set(d)
