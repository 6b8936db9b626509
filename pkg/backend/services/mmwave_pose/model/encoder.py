"""
Video Transformer Encoder
"""

import logging
from typing import Optional

import numpy as np

from model.config import ModelConfig
from model.layers import Block, LayerNorm, Module, run_blocks
from model.masking import MaskBatch
from tensor import ops
from tensor.autograd import DimensionError, Tensor

logger = logging.getLogger(__name__)


class VideoEncoder(Module):
    """Stack of pre-norm blocks with a final LayerNorm"""

    def __init__(self, cfg: ModelConfig, rng: np.random.Generator):
        self.blocks = [
            Block(cfg.embed_dim, cfg.encoder_heads, cfg.mlp_ratio, rng, cfg.ln_eps)
            for _ in range(cfg.encoder_depth)
        ]
        self.norm = LayerNorm(cfg.embed_dim, cfg.ln_eps)
        self.embed_dim = cfg.embed_dim

    def forward(self, tokens: Tensor, plan: Optional[MaskBatch] = None) -> Tensor:
        return encode(self, tokens, plan)


def encode(encoder: VideoEncoder, tokens: Tensor, plan: Optional[MaskBatch] = None) -> Tensor:
    """
    Run the encoder over visible tokens (pretraining, plan given) or all
    tokens (fine-tuning, plan None). tokens: [B, N, D] -> [B, N_visible or N, D].
    """
    if tokens.ndim != 3 or tokens.shape[-1] != encoder.embed_dim:
        raise DimensionError(f"encoder expects [B, N, {encoder.embed_dim}], got {tokens.shape}")
    if plan is not None:
        if len(plan) != tokens.shape[0]:
            raise DimensionError(f"{len(plan)} mask plans for a batch of {tokens.shape[0]}")
        tokens = ops.gather_rows(tokens, plan.visible)
    return run_blocks(encoder.blocks, tokens, encoder.norm)
