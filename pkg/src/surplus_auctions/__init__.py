"""Surplus-maximising auctions: welfare solvers, VCG, randomised mechanisms,
audits and Monte-Carlo experiments."""

from .analysis import (
    AuditReport,
    SurplusReport,
    audit_epir,
    audit_tie,
    benchmark_G,
    binomial_inverse_expectation,
    expected_surplus,
    favorite_item,
    verify_copies_payment_claim,
    verify_divisible_payment_claim,
    verify_surplus_lower_bound,
)
from .experiments import ExperimentReport, GeneratorSpec, gen_instance, monte_carlo, ratio_sweep
from .mechanisms import (
    MechanismDistribution,
    first_price_grand_bundle,
    mechanism_from_config,
    random_allocation,
    restricted_capacity_vcg,
    two_agent_grand_bundle,
    two_agent_single_item_G,
    vcg_with_copies,
)
from .valuations import (
    Curve,
    DivisibleSeparable,
    Explicit,
    Instance,
    MultiUnit,
    UnitDemand,
    ValuationError,
    check_class,
)
from .vcg import Outcome, clarke_payment_crosscheck, run_vcg
from .welfare import max_welfare

__version__ = "0.1.0"
