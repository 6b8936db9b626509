"""
Patch Embedding
3D convolutional tokenizer and fixed separable sin-cos positional embeddings
"""

import logging
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from model.config import ModelConfig
from model.layers import Module, xavier_uniform
from tensor import ops
from tensor.autograd import DimensionError, Tensor, constant, parameter

logger = logging.getLogger(__name__)


def sincos_1d(dim: int, positions: np.ndarray) -> np.ndarray:
    """[len(positions), dim] with sin in the first half and cos in the second"""
    if dim % 2:
        raise ValueError(f"sin-cos embedding dim must be even, got {dim}")
    omega = 1.0 / 10000 ** (np.arange(dim // 2, dtype=np.float64) / (dim / 2.0))
    angles = np.outer(positions.astype(np.float64), omega)
    return np.concatenate([np.sin(angles), np.cos(angles)], axis=1)


def sincos_3d(dim: int, grid: Tuple[int, int, int]) -> np.ndarray:
    """
    Separable spatiotemporal embedding [gt*gh*gw, dim].

    dim/4 channels encode time, 3*dim/8 each encode the two spatial axes.
    Rows follow token order (t, h, w), row-major.
    """
    if dim % 16:
        raise ValueError(f"3D sin-cos embedding needs dim divisible by 16, got {dim}")
    gt, gh, gw = grid
    dt, ds = dim // 4, 3 * dim // 8
    t, h, w = np.meshgrid(np.arange(gt), np.arange(gh), np.arange(gw), indexing='ij')
    return np.concatenate([
        sincos_1d(dt, t.reshape(-1)),
        sincos_1d(ds, h.reshape(-1)),
        sincos_1d(ds, w.reshape(-1)),
    ], axis=1).astype(np.float32)


@dataclass
class TokenGrid:
    tokens: Tensor
    grid: Tuple[int, int, int]
    pos_embed: np.ndarray

    @property
    def n_tokens(self) -> int:
        return self.tokens.shape[-2]


class PatchEmbed(Module):
    """Conv3d with kernel = stride = patch size, flattened to [B, N, D]"""

    def __init__(self, cfg: ModelConfig, rng: np.random.Generator):
        pt, ph, pw = cfg.patch
        fan_in = cfg.in_channels * pt * ph * pw
        self.cfg = cfg
        self.weight = parameter(xavier_uniform(rng, fan_in, cfg.embed_dim,
                                               (cfg.embed_dim, cfg.in_channels, pt, ph, pw)))
        self.bias = parameter(np.zeros(cfg.embed_dim))
        self.pos_embed = constant(sincos_3d(cfg.embed_dim, cfg.grid))

    def forward(self, frames) -> TokenGrid:
        return embed_patches(frames, self)


def embed_patches(frames, embed: PatchEmbed) -> TokenGrid:
    """
    Tokenize clip frames.

    Args:
        frames: [T, H, W] or [B, T, H, W] array or tensor
        embed: the patch embedding parameters

    Returns:
        TokenGrid with tokens [B, N, D] (B = 1 for a single clip)
    """
    cfg = embed.cfg
    x = frames if isinstance(frames, Tensor) else Tensor(np.asarray(frames))
    if x.ndim == 3:
        x = ops.reshape(x, (1,) + x.shape)
    expected = (cfg.n_frames, cfg.height, cfg.width)
    if x.ndim != 4 or x.shape[1:] != expected:
        raise DimensionError(f"embed_patches expects frames [B, {expected}], got {x.shape}")

    b = x.shape[0]
    x = ops.reshape(x, (b, cfg.in_channels) + expected)
    out = ops.conv3d(x, embed.weight, embed.bias, stride=cfg.patch, padding=(0, 0, 0))
    d = cfg.embed_dim
    tokens = ops.reshape(ops.transpose(out, (0, 2, 3, 4, 1)), (b, cfg.n_tokens, d))
    tokens = ops.add(tokens, embed.pos_embed)
    return TokenGrid(tokens=tokens, grid=cfg.grid, pos_embed=embed.pos_embed.data)
