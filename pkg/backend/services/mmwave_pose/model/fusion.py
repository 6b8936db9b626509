"""
Dual-Stream Fusion
RD tokens attend to RA tokens through one residual cross-attention block
"""

import logging

import numpy as np

from model.config import ModelConfig
from model.embedding import TokenGrid
from model.layers import CrossAttention, LayerNorm, Module
from tensor import ops
from tensor.autograd import DimensionError

logger = logging.getLogger(__name__)


class CrossAttentionFusion(Module):
    def __init__(self, cfg: ModelConfig, rng: np.random.Generator):
        self.norm_query = LayerNorm(cfg.embed_dim, cfg.ln_eps)
        self.norm_context = LayerNorm(cfg.embed_dim, cfg.ln_eps)
        self.cross = CrossAttention(cfg.embed_dim, cfg.encoder_heads, rng)

    def forward(self, rd: TokenGrid, ra: TokenGrid) -> TokenGrid:
        return fuse_dual(self, rd, ra)


def fuse_dual(fusion: CrossAttentionFusion, rd: TokenGrid, ra: TokenGrid) -> TokenGrid:
    """rd + cross_attention(query=norm(rd), context=norm(ra)); keeps the RD grid"""
    if rd.grid != ra.grid or rd.tokens.shape != ra.tokens.shape:
        raise DimensionError(f"RD grid {rd.grid}/{rd.tokens.shape} != RA grid {ra.grid}/{ra.tokens.shape}")
    attended = fusion.cross(fusion.norm_query(rd.tokens), fusion.norm_context(ra.tokens))
    return TokenGrid(tokens=ops.add(rd.tokens, attended), grid=rd.grid, pos_embed=rd.pos_embed)
