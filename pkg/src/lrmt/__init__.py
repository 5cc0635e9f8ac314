"""Low-rank multi-task linear representation learning.

A library and CLI for jointly learning a shared linear representation and
per-task weights by two-phase gradient descent, transferring the learned
representation to a new task with step-decay online SGD, training noisy task
groups as an easy-to-difficult curriculum, and verifying the estimation-error
scaling laws on synthetic data.
"""

from .curriculum import (
    CurriculumLevel,
    CurriculumResult,
    curriculum_run,
    ls_warm_start,
    make_curriculum,
    pooled_run,
)
from .errors import (
    ConfigError,
    DegenerateInputError,
    DegenerateTaskError,
    DivergenceError,
    InsufficientDataError,
    InvalidInputError,
)
from .harness import (
    ExperimentConfig,
    ExperimentRecord,
    PowerLawFit,
    default_config,
    fit_power_law,
    load_config,
    read_records,
    run_family,
    write_records,
)
from .kernels import active_backend
from .linalg import (
    SvdResult,
    frobenius_norm,
    gaussian_matrix,
    operator_norm,
    procrustes_distance,
    qr_orthonormal,
    svd,
)
from .objectives import (
    FactorPair,
    GradPair,
    balance_regularizer,
    grad_balance,
    grad_phase1,
    grad_phase2,
    grad_tripuraneni,
    loss_phase1,
    loss_phase2,
    loss_tripuraneni,
)
from .rng import SeededRng
from .solvers import (
    HyperParams,
    NoiseSchedule,
    SolveResult,
    TrajectoryPoint,
    dist_to_target,
    estimation_error,
    gd_loss1,
    gd_loss2,
    hyperparams_for,
    init_factors,
    nsgd,
    phase2_only,
    tail_average,
    theoretical_hyperparams,
    tpgd,
)
from .synth import (
    GroundTruth,
    MultiTaskDataset,
    estimate_rip_delta,
    ground_truth_from_factors,
    linear_spectrum,
    load_dataset,
    make_ground_truth,
    sample_target_stream,
    sample_tasks,
    save_dataset,
)
from .transfer import (
    DecaySchedule,
    TransferResult,
    default_eta0,
    excess_risk,
    make_decay_schedule,
    plugin_eta0,
    sgd_transfer,
    step_size,
)

__version__ = "0.1.0"
