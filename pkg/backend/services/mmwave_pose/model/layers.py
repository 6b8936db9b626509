"""
Neural Network Layers
Parameter containers and transformer building blocks on top of tensor.ops
"""

import logging
from typing import Dict, Iterator, List, Optional, Tuple

import numpy as np

from tensor import ops
from tensor.autograd import DimensionError, Tensor, parameter

logger = logging.getLogger(__name__)


class Module:
    """Base class; parameters are discovered from attributes in assignment order"""

    def named_parameters(self, prefix: str = '') -> Iterator[Tuple[str, Tensor]]:
        for name, value in vars(self).items():
            full = f"{prefix}{name}"
            if isinstance(value, Tensor) and value.requires_grad:
                yield full, value
            elif isinstance(value, Module):
                yield from value.named_parameters(f"{full}.")
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{full}.{i}.")

    def parameters(self) -> List[Tensor]:
        return [p for _, p in self.named_parameters()]

    def zero_grad(self):
        for p in self.parameters():
            p.zero_grad()

    def n_parameters(self) -> int:
        return sum(p.size for p in self.parameters())

    def state_dict(self) -> Dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self.named_parameters()}

    def load_state_dict(self, state: Dict[str, np.ndarray], strict: bool = True) -> List[str]:
        """
        Copy arrays into parameters.

        Returns the names that were loaded. With strict=True every parameter
        must be present; shape disagreements always raise DimensionError.
        """
        own = dict(self.named_parameters())
        if strict:
            missing = sorted(set(own) - set(state))
            unexpected = sorted(set(state) - set(own))
            if missing or unexpected:
                raise KeyError(f"State mismatch: missing={missing[:5]} unexpected={unexpected[:5]}")
        loaded = []
        for name, array in state.items():
            if name not in own:
                continue
            if tuple(array.shape) != own[name].shape:
                raise DimensionError(f"{name}: stored shape {tuple(array.shape)} != model shape {own[name].shape}")
            own[name].data = np.ascontiguousarray(array, dtype=np.float32).copy()
            loaded.append(name)
        return loaded

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)

    def forward(self, *args, **kwargs):
        raise NotImplementedError


def xavier_uniform(rng: np.random.Generator, fan_in: int, fan_out: int, shape) -> np.ndarray:
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=shape)


class Linear(Module):
    """y = x @ W + b with W stored [in_features, out_features]"""

    def __init__(self, in_features: int, out_features: int, rng: np.random.Generator, bias: bool = True):
        self.weight = parameter(xavier_uniform(rng, in_features, out_features, (in_features, out_features)))
        self.bias = parameter(np.zeros(out_features)) if bias else None

    def forward(self, x: Tensor) -> Tensor:
        if x.shape[-1] != self.weight.shape[0]:
            raise DimensionError(f"Linear expects last dim {self.weight.shape[0]}, got {x.shape}")
        y = ops.matmul(x, self.weight)
        return ops.add(y, self.bias) if self.bias is not None else y


class LayerNorm(Module):
    def __init__(self, dim: int, eps: float = 1e-6):
        self.weight = parameter(np.ones(dim))
        self.bias = parameter(np.zeros(dim))
        self.eps = eps

    def forward(self, x: Tensor) -> Tensor:
        return ops.layer_norm(x, self.weight, self.bias, self.eps)


def _split_heads(x: Tensor, heads: int) -> Tensor:
    b, n, d = x.shape
    return ops.transpose(ops.reshape(x, (b, n, heads, d // heads)), (0, 2, 1, 3))


def _merge_heads(x: Tensor) -> Tensor:
    b, h, n, hd = x.shape
    return ops.reshape(ops.transpose(x, (0, 2, 1, 3)), (b, n, h * hd))


def scaled_dot_product(q: Tensor, k: Tensor, v: Tensor) -> Tensor:
    scale = q.shape[-1] ** -0.5
    scores = ops.scale(ops.matmul(q, ops.swapaxes(k, -1, -2)), scale)
    return ops.matmul(ops.softmax(scores, axis=-1), v)


class Attention(Module):
    """Multi-head self-attention over [B, N, D]"""

    def __init__(self, dim: int, heads: int, rng: np.random.Generator):
        if dim % heads:
            raise DimensionError(f"dim {dim} not divisible by heads {heads}")
        self.heads = heads
        self.qkv = Linear(dim, 3 * dim, rng)
        self.proj = Linear(dim, dim, rng)

    def forward(self, x: Tensor) -> Tensor:
        b, n, d = x.shape
        qkv = ops.reshape(self.qkv(x), (b, n, 3, self.heads, d // self.heads))
        qkv = ops.transpose(qkv, (2, 0, 3, 1, 4))
        q, k, v = (ops.slice_(qkv, i) for i in range(3))
        return self.proj(_merge_heads(scaled_dot_product(q, k, v)))


class CrossAttention(Module):
    """Queries from x, keys and values from context"""

    def __init__(self, dim: int, heads: int, rng: np.random.Generator):
        if dim % heads:
            raise DimensionError(f"dim {dim} not divisible by heads {heads}")
        self.heads = heads
        self.q = Linear(dim, dim, rng)
        self.kv = Linear(dim, 2 * dim, rng)
        self.proj = Linear(dim, dim, rng)

    def forward(self, x: Tensor, context: Tensor) -> Tensor:
        b, m, d = context.shape
        q = _split_heads(self.q(x), self.heads)
        kv = ops.reshape(self.kv(context), (b, m, 2, self.heads, d // self.heads))
        kv = ops.transpose(kv, (2, 0, 3, 1, 4))
        k, v = ops.slice_(kv, 0), ops.slice_(kv, 1)
        return self.proj(_merge_heads(scaled_dot_product(q, k, v)))


class MLP(Module):
    def __init__(self, dim: int, hidden: int, rng: np.random.Generator):
        self.fc1 = Linear(dim, hidden, rng)
        self.fc2 = Linear(hidden, dim, rng)

    def forward(self, x: Tensor) -> Tensor:
        return self.fc2(ops.gelu(self.fc1(x)))


class Block(Module):
    """Pre-norm transformer block: x + attn(norm(x)), then x + mlp(norm(x))"""

    def __init__(self, dim: int, heads: int, mlp_ratio: float, rng: np.random.Generator, eps: float = 1e-6):
        self.norm1 = LayerNorm(dim, eps)
        self.attn = Attention(dim, heads, rng)
        self.norm2 = LayerNorm(dim, eps)
        self.mlp = MLP(dim, int(dim * mlp_ratio), rng)

    def forward(self, x: Tensor) -> Tensor:
        x = ops.add(x, self.attn(self.norm1(x)))
        return ops.add(x, self.mlp(self.norm2(x)))


def run_blocks(blocks: List[Block], x: Tensor, norm: Optional[LayerNorm] = None) -> Tensor:
    for block in blocks:
        x = block(x)
    return norm(x) if norm is not None else x
