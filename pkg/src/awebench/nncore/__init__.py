"""Numeric substrate: tensors, reverse-mode tape, GRU kernels, Adam, RNG."""

from .gru import (
    BACKEND,
    GruCellParams,
    gru_cell_forward,
    gru_sequence,
    gru_sequence_unfused,
    use_backend,
)
from .optim import AdamState, adam_step, reduce_lr_on_plateau
from .rng import Rng, derive_seed
from .tensor import Tape, Tensor, backward

__all__ = [
    "AdamState",
    "BACKEND",
    "GruCellParams",
    "Rng",
    "Tape",
    "Tensor",
    "adam_step",
    "backward",
    "derive_seed",
    "gru_cell_forward",
    "gru_sequence",
    "gru_sequence_unfused",
    "reduce_lr_on_plateau",
    "use_backend",
]
