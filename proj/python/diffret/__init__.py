"""Diffusion-based generative retrieval over paired-modality embeddings."""

from ._core import (  # noqa: F401
    Checkpoint,
    ConfigError,
    ContractError,
    DiffusionSchedule,
    FormatError,
    IoError,
    NumericError,
    contrastive_loss,
    cosine_similarity,
    ddim_step,
    default_config_json,
    generate,
    generate_synthetic,
    kl_loss,
    load_checkpoint,
    make_schedule,
    noise_embedding,
    q_sample,
    save_checkpoint,
    score,
    train,
)

__all__ = [
    "Checkpoint",
    "ConfigError",
    "ContractError",
    "DiffusionSchedule",
    "FormatError",
    "IoError",
    "NumericError",
    "contrastive_loss",
    "cosine_similarity",
    "ddim_step",
    "default_config_json",
    "generate",
    "generate_synthetic",
    "kl_loss",
    "load_checkpoint",
    "make_schedule",
    "noise_embedding",
    "q_sample",
    "save_checkpoint",
    "score",
    "train",
]
