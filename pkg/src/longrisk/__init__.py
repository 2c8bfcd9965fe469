"""Long-term factorization of pricing kernels on finite-state Markov models."""
from .model import (
    CashFlowSpec,
    DiscountCurve,
    GrowthSpec,
    MarkovPricingModel,
    apply_pricing_operator,
    bond_price,
    build_model,
    fixture2,
    growth_indexed_model,
    load_curve,
    load_model,
    one_state,
    random_model,
)
from .eigen import (
    EigenSolution,
    ErgodicityCertificate,
    certify_ergodicity,
    eigen_measure,
    hs_martingale,
    long_term_pricing_check,
    principal_eigen,
    recurrence_check,
)

__version__ = "0.1.0"
