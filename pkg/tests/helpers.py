"""Strategies and small builders shared by the unit tests."""

import math

import numpy as np
from hypothesis import strategies as st

from cal.generate import random_coverage, random_mrs
from cal.instance import Instance

# Frozen reference values for the two-player single-item instance
# (v1 = 2, v2 = 1).  Stationarity 2 exp(-x1) = exp(-x2) with x1 + x2 = 1
# gives x1 = (1 + ln 2) / 2; the numbers below were evaluated at 50 digits
# by a separate mpmath script that does not import this package.
DUEL_X1 = 0.84657359027997265471
DUEL_X2 = 0.15342640972002734529
DUEL_FSTAR = 1.2844722300785864070
DUEL_P1 = 0.48988444378926447488
DUEL_P2 = 0.12200500261782215329
DUEL_MARGINALS = (0.57111805751964660176, 0.14223611503929320352, 0.28664582744106019472)

ONE_MINUS_INV_E = 1 - 1 / math.e


@st.composite
def mrs_valuations(draw, m_min=1, m_max=6):
    m = draw(st.integers(m_min, m_max))
    seed = draw(st.integers(0, 2**32 - 1))
    return random_mrs(m, np.random.default_rng(seed))


@st.composite
def coverage_valuations(draw, m_min=1, m_max=8):
    m = draw(st.integers(m_min, m_max))
    seed = draw(st.integers(0, 2**32 - 1))
    return random_coverage(m, np.random.default_rng(seed))


@st.composite
def mrs_instances(draw, n_max=3, m_max=4):
    n = draw(st.integers(1, n_max))
    m = draw(st.integers(1, m_max))
    seed = draw(st.integers(0, 2**32 - 1))
    gen = np.random.default_rng(seed)
    return Instance(tuple(random_mrs(m, gen) for _ in range(n)))


@st.composite
def feasible_points(draw, shape):
    n, m = shape
    seed = draw(st.integers(0, 2**32 - 1))
    gen = np.random.default_rng(seed)
    cols = gen.dirichlet(np.ones(n + 1), size=m)
    return cols[:, :n].T.copy()


def random_feasible(shape, gen):
    n, m = shape
    return gen.dirichlet(np.ones(n + 1), size=m)[:, :n].T.copy()
