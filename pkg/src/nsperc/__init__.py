"""Statistical capacity of the negative spherical perceptron via
stationarized lifted random duality: free-energy evaluators, stationarity
solvers, capacity root finding, and Monte-Carlo / finite-n oracles."""

from .backend import backend_name
from .free_energy import (
    LiftingParams,
    ModelPoint,
    OutOfDomainError,
    SphereIntegrand,
    e_max_sq,
    f_zt,
    psi_r1,
    psi_r2_full,
    psi_r2_partial,
    psi_r3_full,
)
from .specfun import QuadratureGrid, erfc, erfcx, gauss_hermite, log_weighted_power_mean
from .stationarity import (
    ConvergenceError,
    GradientCheckReport,
    ResidualVector,
    SolverConfig,
    check_gradient,
    closed_form_params,
    grad_r2_full,
    grad_r3_full,
    solve_stationary,
    solve_stationary_full,
)
from .capacity import (
    BracketingError,
    CapacityResult,
    alpha_c,
    kappa_c_estimate,
    modulo_m_check,
    ordering_audit,
    results_to_csv,
    sweep,
)
from .oracle import (
    FiniteNInstance,
    McEstimate,
    convex_reference_ground_state,
    finite_n_ground_state,
    mc_expectation,
    transition_scan,
)

__version__ = "0.1.0"

__all__ = [
    "BracketingError",
    "CapacityResult",
    "ConvergenceError",
    "FiniteNInstance",
    "GradientCheckReport",
    "LiftingParams",
    "McEstimate",
    "ModelPoint",
    "OutOfDomainError",
    "QuadratureGrid",
    "ResidualVector",
    "SolverConfig",
    "SphereIntegrand",
    "alpha_c",
    "backend_name",
    "check_gradient",
    "closed_form_params",
    "convex_reference_ground_state",
    "e_max_sq",
    "erfc",
    "erfcx",
    "f_zt",
    "finite_n_ground_state",
    "gauss_hermite",
    "grad_r2_full",
    "grad_r3_full",
    "kappa_c_estimate",
    "log_weighted_power_mean",
    "mc_expectation",
    "modulo_m_check",
    "ordering_audit",
    "psi_r1",
    "psi_r2_full",
    "psi_r2_partial",
    "psi_r3_full",
    "results_to_csv",
    "solve_stationary",
    "solve_stationary_full",
    "sweep",
    "transition_scan",
]
