"""semsense: a desk-scale lab for semantic-aware distributed wireless sensing.

The package covers the full chain: synthesize multipath WiFi channel tensors
with known per-path parameters, recover those parameters with an
expectation-maximization grid search, train per-receiver models with
attention-regularized federated aggregation, transfer models zero-shot to
receivers without labels, and evaluate the convergence / transfer-error
bounds on convex instances.
"""

__version__ = "0.1.0"

from .channel import (
    CsiTensor,
    PathComponent,
    PhysicalSemantics,
    SamplingGrid,
    synthesize_csi,
)
from .errors import (
    AliasingWarning,
    ArchMismatch,
    ConvergenceWarning,
    DivergenceError,
    GridMismatch,
    InsufficientAntennas,
    InsufficientPairs,
    InvalidCutoff,
    InvalidGrid,
    InvalidScenario,
    LearningRateTooLarge,
    NoData,
    ShapeError,
)
from .preproc import cancel_phase_error, split_components
from .estimator import (
    EstimatorConfig,
    estimate_semantics,
    run_estimation,
    z_objective,
)
from .scenario import Scenario, ReceiverProfile, make_scenario, generate_datasets
from .models import LogisticRegression, ModelParams, evaluate
from .fl import (
    TrainConfig,
    ConvergenceTrace,
    coordinator_update,
    coupled_objective,
    train_fedavg_baseline,
    train_personalized,
    train_to_fixed_point,
)
from .mapper import (
    MapperArch,
    MapperParams,
    embed,
    featurize_semantics,
    fit_mapping,
    model_correlation,
    similarity,
)
from .transfer import (
    TransferReport,
    aggregation_coefficients,
    run_transfer_experiment,
    train_local_oracle,
    transfer_model,
)
from .bounds import (
    BoundReport,
    gradient_dispersion,
    training_error_bound,
    transfer_error_bound,
    tv_distance,
)
from .config import ExperimentConfig, load_config

__all__ = [
    "AliasingWarning",
    "ArchMismatch",
    "BoundReport",
    "ConvergenceTrace",
    "ConvergenceWarning",
    "CsiTensor",
    "DivergenceError",
    "EstimatorConfig",
    "ExperimentConfig",
    "GridMismatch",
    "InsufficientAntennas",
    "InsufficientPairs",
    "InvalidCutoff",
    "InvalidGrid",
    "InvalidScenario",
    "LearningRateTooLarge",
    "LogisticRegression",
    "MapperArch",
    "MapperParams",
    "ModelParams",
    "NoData",
    "PathComponent",
    "PhysicalSemantics",
    "ReceiverProfile",
    "SamplingGrid",
    "Scenario",
    "ShapeError",
    "TrainConfig",
    "TransferReport",
    "aggregation_coefficients",
    "cancel_phase_error",
    "coordinator_update",
    "embed",
    "estimate_semantics",
    "evaluate",
    "featurize_semantics",
    "fit_mapping",
    "generate_datasets",
    "gradient_dispersion",
    "load_config",
    "make_scenario",
    "model_correlation",
    "coupled_objective",
    "run_estimation",
    "run_transfer_experiment",
    "similarity",
    "split_components",
    "synthesize_csi",
    "train_fedavg_baseline",
    "train_local_oracle",
    "train_personalized",
    "train_to_fixed_point",
    "training_error_bound",
    "transfer_error_bound",
    "transfer_model",
    "tv_distance",
    "z_objective",
]
