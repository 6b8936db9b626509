"""
Tensor Core
Dense float32 tensor with reverse-mode automatic differentiation

Storage is contiguous row-major float32. Operations accumulate in float64
internally (see tensor.ops) and cast results back to float32.
"""

import logging
import threading
from contextlib import contextmanager
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

logger = logging.getLogger(__name__)

DTYPE = np.float32
ACCUM_DTYPE = np.float64

_grad_mode = threading.local()


class DimensionError(Exception):
    """Raised when tensor shapes or axes do not satisfy an operation's contract"""
    pass


def is_grad_enabled() -> bool:
    return getattr(_grad_mode, 'enabled', True)


@contextmanager
def no_grad():
    """Disable graph recording for the current thread"""
    previous = is_grad_enabled()
    _grad_mode.enabled = False
    try:
        yield
    finally:
        _grad_mode.enabled = previous


class Function:
    """
    A node of the differentiation graph.

    Subclasses implement forward() on raw numpy arrays and backward(), which
    returns one gradient array (or None) per parent tensor.
    """

    def __init__(self, *parents: 'Tensor'):
        self.parents: Tuple['Tensor', ...] = parents

    @classmethod
    def apply(cls, *parents: 'Tensor', **kwargs) -> 'Tensor':
        node = cls(*parents)
        out = node.forward(*[p.data for p in parents], **kwargs)
        requires_grad = is_grad_enabled() and any(p.requires_grad for p in parents)
        return Tensor(out, requires_grad=requires_grad, _node=node if requires_grad else None)

    def forward(self, *args, **kwargs) -> np.ndarray:
        raise NotImplementedError

    def backward(self, grad: np.ndarray) -> Sequence[Optional[np.ndarray]]:
        raise NotImplementedError


class Tensor:
    """Dense n-dimensional float32 array participating in a differentiation graph"""

    def __init__(self, data, requires_grad: bool = False, _node: Optional[Function] = None):
        self.data: np.ndarray = np.ascontiguousarray(data, dtype=DTYPE)
        self.requires_grad = bool(requires_grad)
        self.grad: Optional[np.ndarray] = None
        self.graph_node = _node

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def is_leaf(self) -> bool:
        return self.graph_node is None

    def numpy(self) -> np.ndarray:
        return self.data.copy()

    def item(self) -> float:
        if self.data.size != 1:
            raise DimensionError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def detach(self) -> 'Tensor':
        return Tensor(self.data.copy(), requires_grad=False)

    def zero_grad(self):
        self.grad = None

    # Operator sugar; implementations live in tensor.ops
    def __add__(self, other):
        from tensor import ops
        if isinstance(other, Tensor):
            return ops.add(self, other)
        return ops.add_scalar(self, float(other))

    __radd__ = __add__

    def __sub__(self, other):
        from tensor import ops
        if isinstance(other, Tensor):
            return ops.sub(self, other)
        return ops.add_scalar(self, -float(other))

    def __rsub__(self, other):
        from tensor import ops
        return ops.add_scalar(ops.scale(self, -1.0), float(other))

    def __mul__(self, other):
        from tensor import ops
        if isinstance(other, Tensor):
            return ops.mul(self, other)
        return ops.scale(self, float(other))

    __rmul__ = __mul__

    def __truediv__(self, other):
        from tensor import ops
        if isinstance(other, Tensor):
            raise TypeError("Tensor division by a tensor is not supported")
        return ops.scale(self, 1.0 / float(other))

    def __neg__(self):
        from tensor import ops
        return ops.scale(self, -1.0)

    def __matmul__(self, other):
        from tensor import ops
        return ops.matmul(self, other)

    def _topological_order(self) -> List['Tensor']:
        """Post-order of all grad-requiring tensors reachable from this one"""
        order: List[Tensor] = []
        visited = set()
        stack: List[Tuple[Tensor, bool]] = [(self, False)]

        while stack:
            tensor, expanded = stack.pop()
            if expanded:
                order.append(tensor)
                continue
            if id(tensor) in visited:
                continue
            visited.add(id(tensor))
            stack.append((tensor, True))
            if tensor.graph_node is not None:
                for parent in tensor.graph_node.parents:
                    if parent.requires_grad and id(parent) not in visited:
                        stack.append((parent, False))

        return order

    def backward(self):
        """
        Back-propagate from this scalar tensor.

        Gradients of leaf tensors accumulate into .grad, so two calls without
        zeroing yield exactly twice the gradient.
        """
        if self.data.size != 1:
            raise DimensionError(f"backward() needs a scalar output, got shape {self.shape}")
        if not self.requires_grad:
            raise ValueError("backward() called on a tensor that does not require grad")

        order = self._topological_order()
        pending: Dict[int, np.ndarray] = {id(self): np.ones_like(self.data)}

        for tensor in reversed(order):
            grad = pending.pop(id(tensor), None)
            if grad is None:
                continue

            if tensor.graph_node is None:
                if tensor.grad is None:
                    tensor.grad = grad.astype(DTYPE, copy=True)
                else:
                    tensor.grad = tensor.grad + grad.astype(DTYPE)
                continue

            parent_grads = tensor.graph_node.backward(grad)
            for parent, parent_grad in zip(tensor.graph_node.parents, parent_grads):
                if parent_grad is None or not parent.requires_grad:
                    continue
                if parent_grad.shape != parent.shape:
                    raise DimensionError(
                        f"{type(tensor.graph_node).__name__} produced grad of shape "
                        f"{parent_grad.shape} for input of shape {parent.shape}"
                    )
                parent_grad = np.asarray(parent_grad, dtype=DTYPE)
                key = id(parent)
                if key in pending:
                    pending[key] = pending[key] + parent_grad
                else:
                    pending[key] = parent_grad


def parameter(data) -> Tensor:
    """Create a learnable leaf tensor"""
    return Tensor(data, requires_grad=True)


def constant(data) -> Tensor:
    """Wrap an array as a non-differentiable tensor"""
    return Tensor(data, requires_grad=False)
