"""Truthful-in-expectation combinatorial auctions for matroid-rank-sum bidders.

The allocation rule maximises the expected welfare of Poisson rounding,
which is a concave program when every valuation is a weighted sum of
matroid rank functions, and VCG payments make it truthful in expectation.
"""

from .errors import (
    CalError,
    CapacityError,
    ConvergenceError,
    DegenerateConditioningError,
    InputError,
    NonMRSError,
    PrecisionExhaustedError,
    UnsupportedModeError,
    VerificationError,
)
from .generate import corpus, generate
from .instance import Instance, instance_from_json, load, save
from .matroid import (
    ContractedMatroid,
    GraphicMatroid,
    Matroid,
    OracleMatroid,
    PartitionMatroid,
    UniformMatroid,
    check_matroid_axioms,
    is_independent,
    matroid_from_json,
    rank,
)
from .mechanism import (
    AdaptiveSampler,
    MechanismOutcome,
    allocate_adaptive,
    midr_allocate,
    run_mechanism,
    vcg_payment_expected,
    vcg_payment_samples,
)
from .multilinear import CLOSED, EXACT, Sampled, G_value, gradient, lottery_value, objective, player_gradient
from .rounding import (
    UNASSIGNED,
    Allocation,
    RoundingConfig,
    conditioning_lambda,
    expected_welfare,
    poisson_round,
    poisson_round_plus,
)
from .solver import SolveConfig, SolveResult, feasible, solve, solve_to_delta
from .valuations import (
    Additive,
    BudgetAdditive,
    Coverage,
    MatroidRankSum,
    Valuation,
    budget_additive_counterexample,
    discrete_hessian,
    is_negative_semidefinite,
    mrs_hessian_structure_check,
    value,
    valuation_from_json,
)
from .verify import (
    VerificationReport,
    brute_force_optimum,
    check_approximation,
    check_convexity,
    check_truthfulness,
    deviation_family,
)

__version__ = "0.1.0"
