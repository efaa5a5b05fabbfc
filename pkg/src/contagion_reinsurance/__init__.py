"""Optimal reinsurance under a dynamic contagion claim model.

Simulation of the self- and externally-excited claim intensity, Monte Carlo
evaluation of the exponential-utility value function, first-order-condition
strategies with policy iteration, and the contagion-versus-Cox comparison.
"""
from .analysis import (
    ComparisonReport,
    MonotonicityProbe,
    StranaReport,
    compare_policies,
    coupled_monotonicity,
    monotonicity_probe,
    strana_check,
)
from .contracts import (
    Pricing,
    PremiumPrinciple,
    RetentionContract,
    ceded_moments,
    ceded_moments_exact,
    insurance_rate,
    reinsurance_rate,
    reinsurance_rate_deriv,
    retention,
    retention_deriv,
)
from .errors import (
    ConcavityViolation,
    ConfigError,
    DomainError,
    NumericalError,
    ReinsuranceError,
    StructuralError,
    UnsupportedPolicyError,
)
from .model import MarkDistribution, ModelParams, SelfExcitation
from .optimizer import (
    FocSpec,
    FocSolution,
    IterationResult,
    MCConfig,
    ThresholdReport,
    cox_optimal,
    cox_table,
    foc_value,
    hjb_residual,
    policy_iteration,
    solve_foc,
    thresholds,
)
from .policies import ConstantPolicy, PolicyTable, TimeCurvePolicy
from .process import (
    JumpRecord,
    PathRecord,
    compensator_between,
    expected_claim_count,
    intensity_at,
    log_density_ratio,
    mean_intensity,
    pooled_interarrivals,
    simulate_exact,
    simulate_paths,
    simulate_thinning,
    thinning_counts,
    time_changed_claims,
    time_changed_interarrivals,
)
from .valuation import (
    Estimate,
    PhiTable,
    combined_stderr,
    estimate_phi,
    estimate_phi_factorised,
    estimate_phi_q,
    estimate_phi_table,
    phi_closed_form_poisson,
    phi_deterministic_intensity,
    terminal_wealth,
    value_function,
)

__version__ = "0.1.0"
