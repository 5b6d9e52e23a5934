"""Fixed-time integral sliding mode control with optional GP drift learning."""

from .controller import (
    BoundReport,
    ControllerParams,
    bound_report,
    control_gp,
    control_known,
    lemma1_bound,
    lemma2_bound,
    lemma3_bound,
    theorem1_z_bound,
    theorem2_s_bound,
)
from .errors import (
    ConfigError,
    EvaluationError,
    GainTooSmallError,
    IllConditionedDataError,
    ParameterError,
    PerturbationBoundError,
    SimulationDivergedError,
    SingularGainError,
    UnfitGPError,
)
from .gp import (
    ErrorBoundConfig,
    GPDataset,
    GPModel,
    KernelConfig,
    estimate_drift,
    generate_training_data,
    gp_error_bound,
    gp_fit,
    gp_mean,
    gp_variance,
    kernel_eval,
)
from .numerics import EXP_CLAMP, StepConfig, integrate_step, safe_exp, signed_power
from .sim import (
    MonteCarloResult,
    RunSummary,
    Scenario,
    Trajectory,
    measure_settling,
    run_monte_carlo,
    simulate,
    summarize_run,
    write_trajectory_csv,
)
from .sliding import SlidingParams, SlidingState, advance, integrand, sliding_value
from .system import (
    ReferenceSignal,
    SystemModel,
    constant_reference,
    eval_dynamics,
    make_lemma2_plant,
    make_pmsm,
    sinusoid_reference,
    zero_reference,
)

__version__ = "0.1.0"

__all__ = [
    "BoundReport",
    "ConfigError",
    "ControllerParams",
    "ErrorBoundConfig",
    "EvaluationError",
    "EXP_CLAMP",
    "GainTooSmallError",
    "GPDataset",
    "GPModel",
    "IllConditionedDataError",
    "KernelConfig",
    "MonteCarloResult",
    "ParameterError",
    "PerturbationBoundError",
    "ReferenceSignal",
    "RunSummary",
    "Scenario",
    "SimulationDivergedError",
    "SingularGainError",
    "SlidingParams",
    "SlidingState",
    "StepConfig",
    "SystemModel",
    "Trajectory",
    "UnfitGPError",
    "advance",
    "bound_report",
    "constant_reference",
    "control_gp",
    "control_known",
    "estimate_drift",
    "eval_dynamics",
    "generate_training_data",
    "gp_error_bound",
    "gp_fit",
    "gp_mean",
    "gp_variance",
    "integrand",
    "integrate_step",
    "kernel_eval",
    "lemma1_bound",
    "lemma2_bound",
    "lemma3_bound",
    "make_lemma2_plant",
    "make_pmsm",
    "measure_settling",
    "run_monte_carlo",
    "safe_exp",
    "signed_power",
    "simulate",
    "sinusoid_reference",
    "sliding_value",
    "summarize_run",
    "theorem1_z_bound",
    "theorem2_s_bound",
    "write_trajectory_csv",
    "zero_reference",
]
