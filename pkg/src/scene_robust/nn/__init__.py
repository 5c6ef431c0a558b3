from .gin import (
    ForwardResult,
    GinConfig,
    GraphBatch,
    cross_entropy,
    encoder_backward,
    encoder_forward,
    gin_block_forward,
    init_params,
    loss_and_grad,
)
from .checkpoint import load_checkpoint, save_checkpoint
from .optim import AdamW

__all__ = [
    "ForwardResult",
    "GinConfig",
    "GraphBatch",
    "cross_entropy",
    "encoder_backward",
    "encoder_forward",
    "gin_block_forward",
    "init_params",
    "loss_and_grad",
    "load_checkpoint",
    "save_checkpoint",
    "AdamW",
]
