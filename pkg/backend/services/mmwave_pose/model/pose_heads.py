"""
Pose Heads
Multi-frame heatmap decoder plus the MLP and GCN regression heads
"""

import logging
from collections import deque
from typing import List, Optional, Tuple

import numpy as np

from model.config import ModelConfig
from model.layers import Linear, Module, xavier_uniform
from radar_sim.skeleton import JOINT_INDEX, N_JOINTS
from tensor import ops
from tensor.autograd import DimensionError, Tensor, constant, parameter

logger = logging.getLogger(__name__)

SKELETON_EDGES: List[Tuple[int, int]] = [
    (JOINT_INDEX[a], JOINT_INDEX[b]) for a, b in [
        ('nose', 'left_shoulder'), ('nose', 'right_shoulder'),
        ('left_shoulder', 'left_elbow'), ('left_elbow', 'left_wrist'),
        ('right_shoulder', 'right_elbow'), ('right_elbow', 'right_wrist'),
        ('left_shoulder', 'left_hip'), ('right_shoulder', 'right_hip'),
        ('left_hip', 'left_knee'), ('left_knee', 'left_ankle'),
        ('right_hip', 'right_knee'), ('right_knee', 'right_ankle'),
    ]
]


def skeleton_adjacency(n_joints: int = N_JOINTS, edges=None) -> np.ndarray:
    adjacency = np.zeros((n_joints, n_joints))
    for a, b in (SKELETON_EDGES if edges is None else edges):
        adjacency[a, b] = adjacency[b, a] = 1.0
    return adjacency


def normalized_adjacency(adjacency: np.ndarray) -> np.ndarray:
    """D^-1/2 (A + I) D^-1/2"""
    a_hat = adjacency + np.eye(adjacency.shape[0])
    inv_sqrt = 1.0 / np.sqrt(a_hat.sum(axis=1))
    return a_hat * inv_sqrt[:, None] * inv_sqrt[None, :]


def is_connected(adjacency: np.ndarray) -> bool:
    seen = {0}
    queue = deque([0])
    while queue:
        node = queue.popleft()
        for nxt in np.flatnonzero(adjacency[node]):
            if nxt not in seen:
                seen.add(int(nxt))
                queue.append(int(nxt))
    return len(seen) == adjacency.shape[0]


class Conv3dLayer(Module):
    def __init__(self, in_ch: int, out_ch: int, kernel, stride, padding, rng: np.random.Generator):
        fan_in = in_ch * int(np.prod(kernel))
        fan_out = out_ch * int(np.prod(kernel))
        self.weight = parameter(xavier_uniform(rng, fan_in, fan_out, (out_ch, in_ch) + tuple(kernel)))
        self.bias = parameter(np.zeros(out_ch))
        self.stride = tuple(stride)
        self.padding = tuple(padding)

    def forward(self, x: Tensor) -> Tensor:
        return ops.conv3d(x, self.weight, self.bias, self.stride, self.padding)


def _feature_volume(features: Tensor, cfg: ModelConfig) -> Tensor:
    """[B, N, D] -> [B, D, gt, gh, gw]"""
    b, n, d = features.shape
    if n != cfg.n_tokens or d != cfg.embed_dim:
        raise DimensionError(f"pose head expects [B, {cfg.n_tokens}, {cfg.embed_dim}], got {features.shape}")
    return ops.transpose(ops.reshape(features, (b,) + cfg.grid + (d,)), (0, 4, 1, 2, 3))


class HeatmapDecoder(Module):
    """
    Temporal conv (k=(3,1,1), s=(2,1,1)) halving time, then two
    {nearest 2x upsample, 3x3 conv, GELU} stages and a 1x1x1 conv to K maps.
    """

    def __init__(self, cfg: ModelConfig, rng: np.random.Generator):
        c1, c2, c3 = cfg.pose_channels
        self.cfg = cfg
        self.temporal = Conv3dLayer(cfg.embed_dim, c1, (3, 1, 1), (2, 1, 1), (1, 0, 0), rng)
        self.up1 = Conv3dLayer(c1, c2, (1, 3, 3), (1, 1, 1), (0, 1, 1), rng)
        self.up2 = Conv3dLayer(c2, c3, (1, 3, 3), (1, 1, 1), (0, 1, 1), rng)
        self.final = Conv3dLayer(c3, cfg.n_joints, (1, 1, 1), (1, 1, 1), (0, 0, 0), rng)

    def forward(self, features: Tensor) -> Tensor:
        return decode_heatmaps(self, features)


def decode_heatmaps(decoder: HeatmapDecoder, features: Tensor) -> Tensor:
    """Encoder features [B, N, D] -> heatmaps [B, n_out, K, S, S]"""
    x = decoder.temporal(_feature_volume(features, decoder.cfg))
    x = ops.gelu(decoder.up1(ops.nearest_upsample2x_spatial(x)))
    x = ops.gelu(decoder.up2(ops.nearest_upsample2x_spatial(x)))
    x = decoder.final(x)
    return ops.transpose(x, (0, 2, 1, 3, 4))


def pool_temporal_pairs(features: Tensor, cfg: ModelConfig) -> Tensor:
    """Spatial mean per temporal token slice, then average adjacent pairs: [B, N, D] -> [B, gt/2, D]"""
    b, n, d = features.shape
    gt, gh, gw = cfg.grid
    if n != cfg.n_tokens or gt % 2:
        raise DimensionError(f"temporal pair pooling needs {cfg.n_tokens} tokens and an even grid, got {features.shape}")
    per_slice = ops.mean(ops.reshape(features, (b, gt, gh * gw, d)), axis=2)
    return ops.mean(ops.reshape(per_slice, (b, gt // 2, 2, d)), axis=2)


class MLPHead(Module):
    """Pooled features -> two GELU hidden layers -> sigmoid joint coordinates"""

    def __init__(self, cfg: ModelConfig, rng: np.random.Generator):
        self.cfg = cfg
        self.fc1 = Linear(cfg.embed_dim, cfg.head_hidden, rng)
        self.fc2 = Linear(cfg.head_hidden, cfg.head_hidden, rng)
        self.out = Linear(cfg.head_hidden, cfg.n_joints * 2, rng)

    def forward(self, features: Tensor) -> Tensor:
        pooled = pool_temporal_pairs(features, self.cfg)
        x = ops.gelu(self.fc2(ops.gelu(self.fc1(pooled))))
        b, t, _ = x.shape
        return ops.reshape(ops.sigmoid(self.out(x)), (b, t, self.cfg.n_joints, 2))


class GCNHead(Module):
    """Pooled features -> per-joint embeddings -> two graph convolutions over the skeleton"""

    def __init__(self, cfg: ModelConfig, rng: np.random.Generator, adjacency: Optional[np.ndarray] = None):
        self.cfg = cfg
        adjacency = skeleton_adjacency(cfg.n_joints) if adjacency is None else adjacency
        self.a_hat = constant(normalized_adjacency(adjacency))
        self.lift = Linear(cfg.embed_dim, cfg.n_joints * cfg.gcn_hidden, rng)
        self.gc1 = Linear(cfg.gcn_hidden, cfg.gcn_hidden, rng)
        self.gc2 = Linear(cfg.gcn_hidden, cfg.gcn_hidden, rng)
        self.out = Linear(cfg.gcn_hidden, 2, rng)

    def propagate(self, h: Tensor) -> Tensor:
        """Neighbourhood aggregation Â·H over the joint axis of [..., K, C]"""
        return ops.matmul(self.a_hat, h)

    def joint_stage(self, h: Tensor) -> Tensor:
        """Per-joint features [B, T, K, C] -> coordinates [B, T, K, 2]"""
        h = ops.gelu(self.gc1(self.propagate(h)))
        h = ops.gelu(self.gc2(self.propagate(h)))
        return ops.sigmoid(self.out(h))

    def forward(self, features: Tensor) -> Tensor:
        pooled = pool_temporal_pairs(features, self.cfg)
        b, t, _ = pooled.shape
        h = ops.reshape(self.lift(pooled), (b, t, self.cfg.n_joints, self.cfg.gcn_hidden))
        return self.joint_stage(h)
