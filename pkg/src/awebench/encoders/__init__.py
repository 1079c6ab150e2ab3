"""Acoustic word encoders (PGE, CAE, CSE), training and embedding extraction."""

from .io import (
    EmbeddingMatrix,
    load_checkpoint,
    load_embeddings,
    save_checkpoint,
    save_embeddings,
)
from .losses import (
    cae_loss,
    cae_loss_batch,
    cse_loss,
    cse_loss_batch,
    cse_loss_from_embeddings,
    pge_loss,
    pge_loss_batch,
    triplet_hinge,
)
from .model import OBJECTIVES, EncoderModel, ModelConfig, encode, encode_batch
from .train import PROFILES, TrainConfig, embed_arrays, embed_set, train, validation_evalset

__all__ = [
    "OBJECTIVES",
    "PROFILES",
    "EmbeddingMatrix",
    "EncoderModel",
    "ModelConfig",
    "TrainConfig",
    "cae_loss",
    "cae_loss_batch",
    "cse_loss",
    "cse_loss_batch",
    "cse_loss_from_embeddings",
    "embed_arrays",
    "embed_set",
    "encode",
    "encode_batch",
    "load_checkpoint",
    "load_embeddings",
    "pge_loss",
    "pge_loss_batch",
    "save_checkpoint",
    "save_embeddings",
    "train",
    "triplet_hinge",
    "validation_evalset",
]
