"""
MAE Pose Models
Masked-autoencoder pretraining model and the pose estimation model that
reuses its patch embedding and encoder
"""

import logging
from typing import Dict, List

import numpy as np

from model.checkpoint import CheckpointError, check_compatible, restore_model
from model.config import ModelConfig
from model.embedding import PatchEmbed, TokenGrid, embed_patches
from model.encoder import VideoEncoder, encode
from model.fusion import CrossAttentionFusion, fuse_dual
from model.heatmaps import gaussian_targets, heatmap_loss, heatmaps_to_skeleton
from model.layers import Module
from model.masking import MaskBatch
from model.pose_heads import GCNHead, HeatmapDecoder, MLPHead
from model.reconstruction import ReconstructionDecoder, recon_loss, reconstruct
from seeding import derive_rng
from settings import ConfigError
from tensor import ops
from tensor.autograd import DimensionError, Tensor, constant, no_grad

logger = logging.getLogger(__name__)

ENCODER_PREFIXES = ('patch_embed.', 'patch_embed_ra.', 'fusion.', 'encoder.')


def _checked(cfg: ModelConfig) -> ModelConfig:
    problems = cfg.validate()
    if problems:
        raise ConfigError("Invalid model config: " + "; ".join(problems))
    return cfg


class _FrontEnd(Module):
    """Patch embedding, optional RA embedding + fusion, and the shared encoder"""

    def _build_front(self, cfg: ModelConfig, rng: np.random.Generator):
        self.patch_embed = PatchEmbed(cfg, rng)
        if cfg.dual_stream:
            self.patch_embed_ra = PatchEmbed(cfg, rng)
            self.fusion = CrossAttentionFusion(cfg, rng)
        self.encoder = VideoEncoder(cfg, rng)

    def streams(self, frames: Dict[str, np.ndarray]) -> List[np.ndarray]:
        missing = [m for m in self.cfg.modalities if m not in frames]
        if missing:
            raise DimensionError(f"model needs modalities {self.cfg.modalities}, missing {missing}")
        return [frames[m] for m in self.cfg.modalities]

    def tokens(self, frames: Dict[str, np.ndarray]) -> TokenGrid:
        streams = self.streams(frames)
        grid = embed_patches(streams[0], self.patch_embed)
        if self.cfg.dual_stream:
            grid = fuse_dual(self.fusion, grid, embed_patches(streams[1], self.patch_embed_ra))
        return grid

    def encoder_state(self) -> Dict[str, np.ndarray]:
        return {k: v for k, v in self.state_dict().items() if k.startswith(ENCODER_PREFIXES)}


class MAEPretrainModel(_FrontEnd):
    """Front end plus the reconstruction decoder"""

    def __init__(self, cfg: ModelConfig, seed: int = 0):
        self.cfg = _checked(cfg)
        rng = derive_rng(seed, 'init')
        self._build_front(cfg, rng)
        self.decoder = ReconstructionDecoder(cfg, rng)

    def forward(self, frames: Dict[str, np.ndarray], plan: MaskBatch) -> Tensor:
        features = encode(self.encoder, self.tokens(frames).tokens, plan)
        return reconstruct(self.decoder, features, plan)

    def loss(self, frames: Dict[str, np.ndarray], plan: MaskBatch) -> Tensor:
        pred = self.forward(frames, plan)
        return recon_loss(pred, self.streams(frames), plan, self.cfg.patch, self.cfg.norm_pix_loss)


class PoseEstimationModel(_FrontEnd):
    """Front end plus a heatmap, MLP or GCN pose head; no reconstruction decoder"""

    def __init__(self, cfg: ModelConfig, seed: int = 0):
        self.cfg = _checked(cfg)
        rng = derive_rng(seed, 'init')
        self._build_front(cfg, rng)
        heads = {'heatmap': HeatmapDecoder, 'mlp': MLPHead, 'gcn': GCNHead}
        self.head = heads[cfg.head](cfg, rng)

    def forward(self, frames: Dict[str, np.ndarray]) -> Tensor:
        """Heatmaps [B, n_out, K, S, S] or coordinates [B, n_out, K, 2]"""
        features = encode(self.encoder, self.tokens(frames).tokens, None)
        return self.head(features)

    def loss(self, frames: Dict[str, np.ndarray], labels: np.ndarray) -> Tensor:
        """Weighted heatmap MSE for the heatmap head, coordinate MSE otherwise"""
        out = self.forward(frames)
        labels = np.asarray(labels, dtype=np.float32)
        if self.cfg.head == 'heatmap':
            targets, _ = gaussian_targets(labels, self.cfg.heatmap_size, self.cfg.heatmap_sigma)
            return heatmap_loss(out, targets, self.cfg.fg_weight, self.cfg.fg_threshold)
        if out.shape != labels.shape:
            raise DimensionError(f"coordinate prediction {out.shape} vs labels {labels.shape}")
        diff = ops.sub(out, constant(labels))
        return ops.mean(ops.mul(diff, diff))

    def predict(self, frames: Dict[str, np.ndarray]) -> np.ndarray:
        """Normalized joint coordinates [B, n_out, K, 2]"""
        with no_grad():
            out = self.forward(frames).data
        return heatmaps_to_skeleton(out) if self.cfg.head == 'heatmap' else out.astype(np.float32)

    def load_encoder(self, state: Dict[str, np.ndarray], stored_cfg: ModelConfig) -> List[str]:
        """Copy patch-embedding, fusion and encoder weights from a pretraining checkpoint"""
        check_compatible(stored_cfg, self.cfg)
        encoder_state = {k: v for k, v in state.items() if k.startswith(ENCODER_PREFIXES)}
        expected = set(self.encoder_state())
        if set(encoder_state) != expected:
            missing = sorted(expected - set(encoder_state))
            raise CheckpointError(f"Pretrained checkpoint lacks encoder tensors: {missing[:5]}")
        loaded = restore_model(self, encoder_state, strict=False)
        logger.info(f"Loaded {len(loaded)} pretrained tensors into the pose model")
        return loaded
