"""
Model Configuration
Architecture hyperparameters and the geometry derived from them
"""

from dataclasses import dataclass
from typing import List, Tuple

HEADS = ('heatmap', 'mlp', 'gcn')


@dataclass
class ModelConfig:
    """Architecture of the pretraining and pose models"""
    n_frames: int = 20
    height: int = 224
    width: int = 224
    in_channels: int = 1
    patch: Tuple[int, int, int] = (2, 16, 16)
    embed_dim: int = 384
    encoder_depth: int = 12
    encoder_heads: int = 6
    mlp_ratio: float = 4.0
    recon_decoder_depth: int = 4
    recon_decoder_dim: int = 512
    recon_decoder_heads: int = 16
    mask_ratio: float = 0.9
    norm_pix_loss: bool = False
    n_joints: int = 13
    heatmap_size: int = 56
    pose_channels: Tuple[int, int, int] = (256, 128, 64)
    heatmap_sigma: float = 2.0
    fg_weight: float = 10.0
    fg_threshold: float = 0.01
    head: str = 'heatmap'
    head_hidden: int = 512
    gcn_hidden: int = 64
    dual_stream: bool = False
    input_modality: str = 'rd'
    ln_eps: float = 1e-6

    @property
    def grid(self) -> Tuple[int, int, int]:
        pt, ph, pw = self.patch
        return (self.n_frames // pt, self.height // ph, self.width // pw)

    @property
    def n_tokens(self) -> int:
        gt, gh, gw = self.grid
        return gt * gh * gw

    @property
    def patch_pixels(self) -> int:
        pt, ph, pw = self.patch
        return pt * ph * pw * self.in_channels

    @property
    def n_streams(self) -> int:
        return 2 if self.dual_stream else 1

    @property
    def modalities(self) -> List[str]:
        return ['rd', 'ra'] if self.dual_stream else [self.input_modality]

    @property
    def n_out_frames(self) -> int:
        """Temporal length after the stride-2 decoder conv (k=3, p=1)"""
        return (self.grid[0] - 1) // 2 + 1

    @property
    def n_masked(self) -> int:
        return int(self.mask_ratio * self.n_tokens + 0.5)

    def validate(self) -> List[str]:
        """Return violated invariants (empty when the architecture is consistent)"""
        problems = []
        pt, ph, pw = self.patch
        if self.height % ph or self.width % pw:
            problems.append(f"height/width must be divisible by the patch size {ph}x{pw}")
        if self.n_frames % pt:
            problems.append(f"n_frames must be divisible by the temporal patch size {pt}")
        if not 0.0 < self.mask_ratio < 1.0:
            problems.append("mask_ratio must lie in (0, 1)")
        for name in ('embed_dim', 'recon_decoder_dim'):
            if getattr(self, name) % 16:
                problems.append(f"{name} must be divisible by 16 for separable sin-cos embeddings")
        if self.embed_dim % self.encoder_heads:
            problems.append("embed_dim must be divisible by encoder_heads")
        if self.recon_decoder_dim % self.recon_decoder_heads:
            problems.append("recon_decoder_dim must be divisible by recon_decoder_heads")
        gt, gh, gw = self.grid
        if gh != gw:
            problems.append("token grid must be square")
        if self.heatmap_size != 4 * gw:
            problems.append(f"heatmap_size must be 4x the token grid width ({4 * gw})")
        if self.input_modality not in ('rd', 'ra'):
            problems.append("input_modality must be 'rd' or 'ra'")
        if self.head not in HEADS:
            problems.append(f"head must be one of {HEADS}")
        if self.head in ('mlp', 'gcn') and gt % 2:
            problems.append("mlp/gcn heads pool token pairs in time and need an even temporal grid")
        if len(self.pose_channels) != 3:
            problems.append("pose_channels must list three channel counts")
        if self.n_tokens and not 0 < self.n_masked < self.n_tokens:
            problems.append("mask_ratio leaves no masked or no visible tokens")
        return problems
