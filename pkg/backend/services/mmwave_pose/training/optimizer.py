"""
Optimizer and Schedule
AdamW with decoupled weight decay, layer-wise learning-rate decay groups and
a per-step cosine schedule with linear warmup
"""

import logging
import math
import re
from dataclasses import dataclass, field
from typing import Dict, List, Tuple

import numpy as np

from tensor.autograd import Tensor

logger = logging.getLogger(__name__)

_BLOCK_PATTERN = re.compile(r'^encoder\.blocks\.(\d+)\.')
_EMBED_PREFIXES = ('patch_embed.', 'patch_embed_ra.', 'fusion.')


def layer_depth(name: str, n_blocks: int) -> int:
    """
    Distance from the top of the network.

    Patch embedding and fusion sit deepest at n_blocks + 1, encoder block i
    at n_blocks - i, and the encoder norm and all heads at 0.
    """
    if name.startswith(_EMBED_PREFIXES):
        return n_blocks + 1
    match = _BLOCK_PATTERN.match(name)
    if match:
        return n_blocks - int(match.group(1))
    return 0


def skips_weight_decay(name: str, param: Tensor) -> bool:
    """Biases, LayerNorm parameters (all 1-D) and the mask token are never decayed"""
    return param.ndim <= 1 or name.endswith('mask_token')


@dataclass
class ParamGroup:
    name: str
    params: List[Tuple[str, Tensor]]
    lr_scale: float
    weight_decay: float
    depth: int


def build_param_groups(named_params, weight_decay: float, layerwise_decay: float,
                       n_blocks: int) -> List[ParamGroup]:
    groups: Dict[Tuple[int, bool], ParamGroup] = {}
    for name, param in named_params:
        depth = layer_depth(name, n_blocks)
        no_decay = skips_weight_decay(name, param)
        key = (depth, no_decay)
        if key not in groups:
            groups[key] = ParamGroup(
                name=f"depth{depth}_{'no_decay' if no_decay else 'decay'}",
                params=[],
                lr_scale=layerwise_decay ** depth,
                weight_decay=0.0 if no_decay else weight_decay,
                depth=depth,
            )
        groups[key].params.append((name, param))
    return [groups[k] for k in sorted(groups, key=lambda k: (-k[0], k[1]))]


def cosine_lr(step: int, total_steps: int, warmup_steps: int, base_lr: float, min_lr: float = 0.0) -> float:
    """Linear warmup over warmup_steps, then half-cosine decay to min_lr"""
    if warmup_steps > 0 and step < warmup_steps:
        return base_lr * (step + 1) / warmup_steps
    span = max(1, total_steps - warmup_steps)
    progress = min(1.0, (step - warmup_steps) / span)
    return min_lr + (base_lr - min_lr) * 0.5 * (1.0 + math.cos(math.pi * progress))


@dataclass
class AdamW:
    groups: List[ParamGroup]
    betas: Tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8
    step_count: int = 0
    _m: Dict[int, np.ndarray] = field(default_factory=dict)
    _v: Dict[int, np.ndarray] = field(default_factory=dict)

    def group_lrs(self, lr: float) -> Dict[str, float]:
        return {g.name: lr * g.lr_scale for g in self.groups}

    def step(self, lr: float):
        self.step_count += 1
        b1, b2 = self.betas
        bias1 = 1.0 - b1 ** self.step_count
        bias2 = 1.0 - b2 ** self.step_count

        for group in self.groups:
            group_lr = lr * group.lr_scale
            for _, param in group.params:
                if param.grad is None:
                    continue
                key = id(param)
                grad = param.grad.astype(np.float64)
                m = self._m.get(key, np.zeros_like(grad))
                v = self._v.get(key, np.zeros_like(grad))
                m = b1 * m + (1.0 - b1) * grad
                v = b2 * v + (1.0 - b2) * grad * grad
                self._m[key], self._v[key] = m, v

                data = param.data.astype(np.float64)
                if group.weight_decay:
                    data = data - group_lr * group.weight_decay * data
                data = data - group_lr * (m / bias1) / (np.sqrt(v / bias2) + self.eps)
                param.data = data.astype(np.float32)

    def zero_grad(self):
        for group in self.groups:
            for _, param in group.params:
                param.zero_grad()
