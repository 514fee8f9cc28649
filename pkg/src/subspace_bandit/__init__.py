"""Two-phase continuum-armed bandit with low-rank subspace recovery.

Phase 1 estimates the k-dimensional relevant subspace of a d-dimensional
action space from noisy finite-difference measurements (matrix Dantzig
selector); Phase 2 runs UCB-1 on a grid laid out inside the recovered
subspace.  Regret is accounted per round and decomposed into exploration,
optimization, and subspace-mismatch parts.
"""

from .envs import (
    ConditioningReport,
    DomainError,
    Environment,
    LinearParamMatrix,
    MeanRewardSpec,
    make_environment,
    make_row_orthonormal,
    mean_spec,
    mean_reward,
    sample_reward,
    sample_rewards,
    gradient_mean_reward,
    optimal_value,
    best_on_subspace,
    estimate_conditioning,
    to_descriptor,
    environment_from_descriptor,
)
from .sampling import (
    MeasurementBundle,
    SamplingPlan,
    SamplingSets,
    apply_adjoint,
    apply_operator,
    collect_measurements,
    draw_sampling_sets,
)
from .recovery import (
    DantzigProblem,
    DegenerateRecoveryError,
    RecoveryResult,
    SolveInfo,
    SolverConfig,
    compute_lambda,
    ds_error_bound,
    extract_subspace,
    recover_subspace,
    solve_dantzig,
    subspace_error,
)
from .bandit import (
    ArmGrid,
    BudgetError,
    Phase2Config,
    Phase2Result,
    Ucb1State,
    build_arm_grid,
    choose_M,
    run_phase2,
    ucb1_select,
    ucb1_update,
)
from .pipeline import (
    PracticalParams,
    RunAborted,
    RunRecord,
    StepSizeError,
    TheoryConstants,
    TheoryParams,
    choose_epsilon,
    decompose_regret,
    plan_parameters,
    r3_bound,
    run_cablp,
)
from .harness import (
    CellResult,
    ExperimentConfig,
    SweepSummary,
    emit_plot_data,
    fit_regret_exponent,
    load_config,
    run_experiment,
)

__all__ = [
    "ConditioningReport",
    "DomainError",
    "Environment",
    "LinearParamMatrix",
    "MeanRewardSpec",
    "make_environment",
    "make_row_orthonormal",
    "mean_spec",
    "mean_reward",
    "sample_reward",
    "sample_rewards",
    "gradient_mean_reward",
    "optimal_value",
    "best_on_subspace",
    "estimate_conditioning",
    "to_descriptor",
    "environment_from_descriptor",
    "MeasurementBundle",
    "SamplingPlan",
    "SamplingSets",
    "apply_adjoint",
    "apply_operator",
    "collect_measurements",
    "draw_sampling_sets",
    "DantzigProblem",
    "DegenerateRecoveryError",
    "RecoveryResult",
    "SolveInfo",
    "SolverConfig",
    "compute_lambda",
    "ds_error_bound",
    "extract_subspace",
    "recover_subspace",
    "solve_dantzig",
    "subspace_error",
    "ArmGrid",
    "BudgetError",
    "Phase2Config",
    "Phase2Result",
    "Ucb1State",
    "build_arm_grid",
    "choose_M",
    "run_phase2",
    "ucb1_select",
    "ucb1_update",
    "PracticalParams",
    "RunAborted",
    "RunRecord",
    "StepSizeError",
    "TheoryConstants",
    "TheoryParams",
    "choose_epsilon",
    "decompose_regret",
    "plan_parameters",
    "r3_bound",
    "run_cablp",
    "CellResult",
    "ExperimentConfig",
    "SweepSummary",
    "emit_plot_data",
    "fit_regret_exponent",
    "load_config",
    "run_experiment",
]

__version__ = "0.1.0"
