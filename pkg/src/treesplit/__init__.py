"""Splitting algorithms: exact costs, stochastic estimators, and asymptotics.

A splitting algorithm resolves a group of n items by dividing it into a
random number of random subsets, recursing on every subset of size at least
the threshold.  This package computes the expected cost (node count) exactly,
estimates it through four independent stochastic representations, and
evaluates the renewal-theoretic limit objects: the limit constant, the
oscillating mean profile of lattice (arithmetic) models, and the variance
profile that normalizes the central limit behaviour.
"""

__version__ = "0.1.0"

from .model import (
    Deterministic,
    Mixture,
    SamplerLaw,
    SpanResult,
    SpecError,
    SplittingMeasure,
    SplittingSpec,
    Symmetric,
    build_measure,
    detect_span,
    load_spec_file,
    make_qary_spec,
    measure_from_atoms,
    moments,
    parse_spec,
    spec_to_jsonable,
    validate,
)
from .exact import (
    CostPmf,
    CostTable,
    closed_form_qary,
    cost_distribution,
    expected_cost_table,
    poisson_transform_expect,
    poisson_transform_with_bound,
)
from .montecarlo import (
    CltReport,
    LlnRow,
    McEstimate,
    PsiWalkResult,
    SimulationBudgetError,
    TreeStats,
    WalkConfig,
    clt_study,
    estimate_cost,
    lln_study,
    overshoot_bound,
    poisson_qadic_sample,
    poisson_qadic_samples,
    psi_walk,
    qadic_cost_samples,
    qadic_sample_rn,
    rep12_estimate,
    rep8_estimate,
    simulate_tree,
)
from .asymptotics import (
    ConvergenceRow,
    PeriodicProfile,
    convergence_report,
    f1_quadrature,
    f1_series,
    f2_montecarlo,
    f2_pointwise,
    f2_profile,
    f2_quadrature,
    f_value,
    limit_constant,
    periodic_profile_F,
    validate_profile,
    var_phi_series,
)

__all__ = [name for name in dir() if not name.startswith("_")]
