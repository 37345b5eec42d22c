"""Recursive multi-modal encoder network: python surface over the C++ core."""

from sen._core import (
    ConfigError,
    IoError,
    NumericError,
    Sen,
    ShapeError,
    average_features,
    config_digest,
    context_inject,
    contrastive_predict,
    cosine_lr,
    default_config,
    gen_parity_task,
    gradcheck,
    run_experiment,
)

__all__ = [
    "ConfigError",
    "IoError",
    "NumericError",
    "Sen",
    "ShapeError",
    "average_features",
    "config_digest",
    "context_inject",
    "contrastive_predict",
    "cosine_lr",
    "default_config",
    "gen_parity_task",
    "gradcheck",
    "run_experiment",
]
