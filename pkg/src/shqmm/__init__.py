"""Split hidden quantum Markov models with Stiefel-manifold learning."""

from .dynamics import (
    HmmModel,
    HqmmModel,
    ShqmmModel,
    aggregate_density,
    hmm_forward_loglik,
    hqmm_filter,
    sequence_logliks,
    shqmm_filter,
    shqmm_sequence_loglik,
    shqmm_step,
    symbol_distribution,
)
from .learning import (
    TrainConfig,
    baum_welch_train,
    batch_loss,
    cayley_update,
    grad_kappa,
    init_ensemble,
    init_stiefel,
    stiefel_distance,
    train,
    train_hqmm,
)
from .metrics import da_report, da_score, f_nonlinear
from .quantum_core import (
    ConditionalDensityEnsemble,
    KrausBundle,
    param_count,
    split_point,
    stack_bundle,
    validate_density,
)

__version__ = "0.1.0"

__all__ = [
    "ConditionalDensityEnsemble",
    "HmmModel",
    "HqmmModel",
    "KrausBundle",
    "ShqmmModel",
    "TrainConfig",
    "aggregate_density",
    "batch_loss",
    "baum_welch_train",
    "cayley_update",
    "da_report",
    "da_score",
    "f_nonlinear",
    "grad_kappa",
    "hmm_forward_loglik",
    "hqmm_filter",
    "init_ensemble",
    "init_stiefel",
    "param_count",
    "sequence_logliks",
    "shqmm_filter",
    "shqmm_sequence_loglik",
    "shqmm_step",
    "split_point",
    "stack_bundle",
    "stiefel_distance",
    "symbol_distribution",
    "train",
    "train_hqmm",
    "validate_density",
]
