"""Visual-language bridge: projection layer, token sequences, tiny causal
language model with exact hand-derived gradients, and the two-stage trainer."""

from .vocab import (
    BOS,
    EOS,
    PAD,
    VIS_CLOSE,
    VIS_OPEN,
    FRAME_PREFIX_WORDS,
    Vocabulary,
    build_vocab,
)
from .projector import gelu, gelu_grad, init_projection_params, project
from .sequence import TokenSequence, assemble_sequence
from .model import (
    AlignmentModel,
    ModelConfig,
    forward_logits,
    generate,
    gradients,
    init_params,
    loss,
    param_hash,
)
from .training import TrainConfig, train

__all__ = [
    "AlignmentModel",
    "BOS",
    "EOS",
    "FRAME_PREFIX_WORDS",
    "ModelConfig",
    "PAD",
    "TokenSequence",
    "TrainConfig",
    "VIS_CLOSE",
    "VIS_OPEN",
    "Vocabulary",
    "assemble_sequence",
    "build_vocab",
    "forward_logits",
    "gelu",
    "gelu_grad",
    "generate",
    "gradients",
    "init_params",
    "init_projection_params",
    "loss",
    "param_hash",
    "project",
    "train",
]
