"""
Reconstruction Decoder
Lightweight transformer that predicts the pixels of masked patches
"""

import logging
from typing import Sequence, Tuple, Union

import numpy as np

from model.config import ModelConfig
from model.embedding import sincos_3d
from model.layers import Block, LayerNorm, Linear, Module, run_blocks
from model.masking import MaskBatch, MaskPlan
from tensor import ops
from tensor.autograd import DimensionError, Tensor, constant, parameter

logger = logging.getLogger(__name__)

Frames = Union[np.ndarray, Sequence[np.ndarray]]


class ReconstructionDecoder(Module):
    def __init__(self, cfg: ModelConfig, rng: np.random.Generator):
        dd = cfg.recon_decoder_dim
        self.decoder_embed = Linear(cfg.embed_dim, dd, rng)
        self.mask_token = parameter(rng.normal(0.0, 0.02, size=(1, 1, dd)))
        self.blocks = [
            Block(dd, cfg.recon_decoder_heads, cfg.mlp_ratio, rng, cfg.ln_eps)
            for _ in range(cfg.recon_decoder_depth)
        ]
        self.norm = LayerNorm(dd, cfg.ln_eps)
        self.head = Linear(dd, cfg.patch_pixels * cfg.n_streams, rng)
        self.pos_embed = constant(sincos_3d(dd, cfg.grid))
        self.n_tokens = cfg.n_tokens

    def forward(self, features: Tensor, plan: MaskBatch) -> Tensor:
        return reconstruct(self, features, plan)


def reconstruct(decoder: ReconstructionDecoder, features: Tensor, plan: MaskBatch) -> Tensor:
    """
    Predict masked patches from visible-token features.

    features: [B, N_visible, D] -> predictions [B, N_masked, patch pixels]
    """
    b = features.shape[0]
    visible, masked = plan.visible, plan.masked
    if features.shape[1] != visible.shape[1]:
        raise DimensionError(f"features carry {features.shape[1]} tokens, plan has {visible.shape[1]} visible")

    x = decoder.decoder_embed(features)
    dd = x.shape[-1]
    mask_tokens = ops.broadcast_to(decoder.mask_token, (b, masked.shape[1], dd))
    x = ops.gather_rows(ops.concat([x, mask_tokens], axis=1), plan.ids_restore)
    x = ops.add(x, decoder.pos_embed)
    x = run_blocks(decoder.blocks, x, decoder.norm)
    pred = decoder.head(x)
    return ops.gather_rows(pred, masked)


def patchify(frames: np.ndarray, patch: Tuple[int, int, int]) -> np.ndarray:
    """[B, T, H, W] (or [T, H, W]) -> [B, N, pt*ph*pw] in token order (t, h, w)"""
    frames = np.asarray(frames, dtype=np.float32)
    squeeze = frames.ndim == 3
    if squeeze:
        frames = frames[None]
    b, t, h, w = frames.shape
    pt, ph, pw = patch
    if t % pt or h % ph or w % pw:
        raise DimensionError(f"frames {frames.shape[1:]} not divisible by patch {patch}")
    x = frames.reshape(b, t // pt, pt, h // ph, ph, w // pw, pw).transpose(0, 1, 3, 5, 2, 4, 6)
    x = x.reshape(b, -1, pt * ph * pw)
    return x[0] if squeeze else x


def unpatchify(patches: np.ndarray, grid: Tuple[int, int, int], patch: Tuple[int, int, int]) -> np.ndarray:
    """Inverse of patchify for a single stream: [B, N, P] -> [B, T, H, W]"""
    patches = np.asarray(patches)
    squeeze = patches.ndim == 2
    if squeeze:
        patches = patches[None]
    (gt, gh, gw), (pt, ph, pw) = grid, patch
    b = patches.shape[0]
    x = patches.reshape(b, gt, gh, gw, pt, ph, pw).transpose(0, 1, 4, 2, 5, 3, 6)
    x = x.reshape(b, gt * pt, gh * ph, gw * pw)
    return x[0] if squeeze else x


def target_patches(streams: Frames, patch: Tuple[int, int, int], norm_pix: bool = False) -> np.ndarray:
    """
    Pixel targets [B, N, P * n_streams]; streams are concatenated per token.
    With norm_pix each patch is standardized over its own pixels.
    """
    if isinstance(streams, np.ndarray):
        streams = [streams]
    targets = np.concatenate([patchify(s, patch) for s in streams], axis=-1)
    if norm_pix:
        mean = targets.mean(axis=-1, keepdims=True)
        var = targets.var(axis=-1, keepdims=True)
        targets = (targets - mean) / np.sqrt(var + 1e-6)
    return targets.astype(np.float32)


def recon_loss(pred: Tensor, streams: Frames, plan: MaskBatch, patch: Tuple[int, int, int],
               norm_pix: bool = False) -> Tensor:
    """Mean squared error over masked patches only"""
    targets = target_patches(streams, patch, norm_pix)
    rows = np.arange(targets.shape[0])[:, None]
    masked_targets = targets[rows, plan.masked]
    if pred.shape != masked_targets.shape:
        raise DimensionError(f"prediction {pred.shape} vs masked targets {masked_targets.shape}")
    diff = ops.sub(pred, constant(masked_targets))
    return ops.mean(ops.mul(diff, diff))


def reconstruct_clip(frames: np.ndarray, pred: np.ndarray, plan: MaskPlan, cfg: ModelConfig,
                     stream: int = 0) -> np.ndarray:
    """
    Clip [T, H, W] whose masked patches are replaced by the decoder predictions.

    pred holds one clip's masked-patch predictions [N_masked, P * n_streams];
    stream selects which stream's pixels to paste back.
    """
    patches = patchify(frames, cfg.patch).copy()
    p = cfg.patch_pixels
    patches[plan.masked] = np.asarray(pred)[:, stream * p:(stream + 1) * p]
    return unpatchify(patches, cfg.grid, cfg.patch)
