"""Chaotic-phase dynamical reduction model for N-state quantum systems."""

from .errors import (
    CollapseError,
    DegenerateInitial,
    DimensionTooLarge,
    LowExpectedCount,
    SingularPhase,
    StepOverflow,
    WrongDimension,
)
from .model import (
    AlphaVector,
    ModelParams,
    PhaseMode,
    RateConvention,
    StateVector,
    alpha_from_phase,
    alpha_vector,
    closed_form_x,
    coupling_f,
    coupling_vector,
    full_rhs,
    heaviside_plus,
    logistic_rate,
    norm_drift,
    q_value,
    reduction_rhs,
)
from .integrator import (
    IntegratorConfig,
    Law,
    Outcome,
    Trajectory,
    classify_outcome,
    collapse_time_analytic,
    integrate,
    reduction_time_analytic,
    step_rk4,
)
from .ensemble import (
    EnsembleReport,
    PhaseSampler,
    chi_square_test,
    compare_reports,
    run_ensemble,
    sample_phases,
    sign_config_oracle,
)

__version__ = "0.1.0"
