"""Train small convolutional nets under periodic low-rank projection.

The toolkit interleaves SGD with energy-thresholded truncated-SVD
projection of convolution weights, optionally regularized by a
nuclear-norm sub-gradient, and exports the trained layers as two-layer
cascades with measured FLOPs reduction and a rank-trajectory log.
"""

__version__ = "0.1.0"

from .data import Dataset, generate_synthetic, load_idx
from .estimator import TRPClassifier
from .exceptions import (
    CheckpointError,
    ConfigError,
    IdxFormatError,
    NumericalError,
    RankPruneError,
)
from .linalg import (
    BoundReport,
    SvdFactors,
    TsvdResult,
    check_low_rank_residual,
    check_mirsky,
    frobenius_norm,
    nuclear_norm,
    nuclear_subgradient,
    numerical_rank,
    singular_values,
    svd,
    tsvd,
)
from .net import (
    NetworkModel,
    backward,
    evaluate,
    forward,
    load_model,
    predict_proba,
    save_model,
    tiny_conv_net,
)
from .reshape import (
    DecomposedPair,
    FlopsReport,
    decompose_export,
    flops_report,
    from_matrix,
    low_rank_project,
    to_matrix,
)
from .trp import (
    EpochMetrics,
    GradBoundTracker,
    RankTrajectory,
    Theorem2Report,
    TrajectoryEvent,
    TrainResult,
    TrpConfig,
    energy_ratios,
    sgd_step,
    theorem2_monitor,
    train,
    trp_step,
)

__all__ = [
    "BoundReport",
    "CheckpointError",
    "ConfigError",
    "Dataset",
    "DecomposedPair",
    "EpochMetrics",
    "FlopsReport",
    "GradBoundTracker",
    "IdxFormatError",
    "NetworkModel",
    "NumericalError",
    "RankPruneError",
    "RankTrajectory",
    "SvdFactors",
    "TRPClassifier",
    "Theorem2Report",
    "TrajectoryEvent",
    "TrainResult",
    "TrpConfig",
    "TsvdResult",
    "backward",
    "check_low_rank_residual",
    "check_mirsky",
    "decompose_export",
    "energy_ratios",
    "evaluate",
    "flops_report",
    "forward",
    "frobenius_norm",
    "from_matrix",
    "generate_synthetic",
    "load_idx",
    "load_model",
    "low_rank_project",
    "nuclear_norm",
    "nuclear_subgradient",
    "numerical_rank",
    "predict_proba",
    "save_model",
    "sgd_step",
    "singular_values",
    "svd",
    "theorem2_monitor",
    "tiny_conv_net",
    "to_matrix",
    "train",
    "trp_step",
    "tsvd",
]
