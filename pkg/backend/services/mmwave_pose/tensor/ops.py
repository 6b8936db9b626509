"""
Differentiable Operations
Every tensor operation the model needs, each with an analytic backward pass

Shape coercion is explicit: elementwise binary ops accept either equal shapes
or an operand whose shape is a trailing suffix of the other (bias/affine add).
Matmul broadcasts batch dimensions. Anything else goes through broadcast_to.
"""

import logging
from typing import Optional, Sequence, Tuple, Union

import numpy as np
from scipy.special import expit

from tensor.autograd import ACCUM_DTYPE, DTYPE, DimensionError, Function, Tensor

logger = logging.getLogger(__name__)

Axis = Optional[Union[int, Tuple[int, ...]]]

GELU_COEFF = 0.044715
SQRT_2_OVER_PI = float(np.sqrt(2.0 / np.pi))


def _as_tensor(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def _normalize_axes(axis: Axis, ndim: int) -> Tuple[int, ...]:
    if axis is None:
        return tuple(range(ndim))
    axes = (axis,) if isinstance(axis, int) else tuple(axis)
    normalized = []
    for ax in axes:
        if not -ndim <= ax < ndim:
            raise DimensionError(f"Axis {ax} out of range for tensor of rank {ndim}")
        normalized.append(ax % ndim)
    return tuple(sorted(set(normalized)))


def _check_suffix_broadcast(a_shape: Tuple[int, ...], b_shape: Tuple[int, ...], op: str):
    if a_shape == b_shape:
        return
    short, long_ = (a_shape, b_shape) if len(a_shape) <= len(b_shape) else (b_shape, a_shape)
    if len(short) == 0 or long_[len(long_) - len(short):] == short:
        return
    raise DimensionError(f"{op}: shapes {a_shape} and {b_shape} are not suffix-compatible")


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """Sum a broadcast gradient back down to the operand's shape"""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for i, size in enumerate(shape):
        if size == 1 and grad.shape[i] != 1:
            grad = grad.sum(axis=i, keepdims=True)
    return grad


# ---------------------------------------------------------------------------
# Elementwise arithmetic
# ---------------------------------------------------------------------------

class Add(Function):
    def forward(self, a, b):
        _check_suffix_broadcast(a.shape, b.shape, 'add')
        self.shapes = (a.shape, b.shape)
        return a + b

    def backward(self, grad):
        return _unbroadcast(grad, self.shapes[0]), _unbroadcast(grad, self.shapes[1])


class Sub(Function):
    def forward(self, a, b):
        _check_suffix_broadcast(a.shape, b.shape, 'sub')
        self.shapes = (a.shape, b.shape)
        return a - b

    def backward(self, grad):
        return _unbroadcast(grad, self.shapes[0]), _unbroadcast(-grad, self.shapes[1])


class Mul(Function):
    def forward(self, a, b):
        _check_suffix_broadcast(a.shape, b.shape, 'mul')
        self.a, self.b = a, b
        return a * b

    def backward(self, grad):
        return (_unbroadcast(grad * self.b, self.a.shape),
                _unbroadcast(grad * self.a, self.b.shape))


class Scale(Function):
    def forward(self, x, factor: float = 1.0):
        self.factor = factor
        return x * DTYPE(factor)

    def backward(self, grad):
        return (grad * DTYPE(self.factor),)


class AddScalar(Function):
    def forward(self, x, value: float = 0.0):
        return x + DTYPE(value)

    def backward(self, grad):
        return (grad,)


def add(a: Tensor, b: Tensor) -> Tensor:
    return Add.apply(_as_tensor(a), _as_tensor(b))


def sub(a: Tensor, b: Tensor) -> Tensor:
    return Sub.apply(_as_tensor(a), _as_tensor(b))


def mul(a: Tensor, b: Tensor) -> Tensor:
    return Mul.apply(_as_tensor(a), _as_tensor(b))


def scale(x: Tensor, factor: float) -> Tensor:
    return Scale.apply(x, factor=factor)


def add_scalar(x: Tensor, value: float) -> Tensor:
    return AddScalar.apply(x, value=value)


# ---------------------------------------------------------------------------
# Matrix product
# ---------------------------------------------------------------------------

class MatMul(Function):
    def forward(self, a, b):
        if a.ndim < 2 or b.ndim < 2:
            raise DimensionError(f"matmul needs rank >= 2 operands, got {a.shape} and {b.shape}")
        if a.shape[-1] != b.shape[-2]:
            raise DimensionError(f"matmul inner dimensions differ: {a.shape} x {b.shape}")
        try:
            np.broadcast_shapes(a.shape[:-2], b.shape[:-2])
        except ValueError:
            raise DimensionError(f"matmul batch dimensions not broadcastable: {a.shape} x {b.shape}")
        self.a = a.astype(ACCUM_DTYPE)
        self.b = b.astype(ACCUM_DTYPE)
        return np.matmul(self.a, self.b)

    def backward(self, grad):
        g = grad.astype(ACCUM_DTYPE)
        grad_a = np.matmul(g, np.swapaxes(self.b, -1, -2))
        grad_b = np.matmul(np.swapaxes(self.a, -1, -2), g)
        return _unbroadcast(grad_a, self.a.shape), _unbroadcast(grad_b, self.b.shape)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    return MatMul.apply(_as_tensor(a), _as_tensor(b))


# ---------------------------------------------------------------------------
# Reductions
# ---------------------------------------------------------------------------

class Sum(Function):
    def forward(self, x, axis: Axis = None, keepdims: bool = False):
        self.axes = _normalize_axes(axis, x.ndim)
        self.keepdims = keepdims
        self.in_shape = x.shape
        return x.astype(ACCUM_DTYPE).sum(axis=self.axes, keepdims=keepdims)

    def backward(self, grad):
        if not self.keepdims:
            grad = np.expand_dims(grad, self.axes)
        return (np.broadcast_to(grad, self.in_shape).copy(),)


class Mean(Function):
    def forward(self, x, axis: Axis = None, keepdims: bool = False):
        self.axes = _normalize_axes(axis, x.ndim)
        self.keepdims = keepdims
        self.in_shape = x.shape
        self.count = int(np.prod([x.shape[a] for a in self.axes])) if self.axes else 1
        return x.astype(ACCUM_DTYPE).mean(axis=self.axes, keepdims=keepdims)

    def backward(self, grad):
        if not self.keepdims:
            grad = np.expand_dims(grad, self.axes)
        return (np.broadcast_to(grad / self.count, self.in_shape).copy(),)


def reduce_sum(x: Tensor, axis: Axis = None, keepdims: bool = False) -> Tensor:
    return Sum.apply(x, axis=axis, keepdims=keepdims)


def mean(x: Tensor, axis: Axis = None, keepdims: bool = False) -> Tensor:
    return Mean.apply(x, axis=axis, keepdims=keepdims)


# ---------------------------------------------------------------------------
# Shape manipulation
# ---------------------------------------------------------------------------

class Transpose(Function):
    def forward(self, x, axes: Sequence[int] = None):
        if axes is None:
            axes = tuple(reversed(range(x.ndim)))
        in_range = all(-x.ndim <= a < x.ndim for a in axes)
        if not in_range or sorted(a % x.ndim for a in axes) != list(range(x.ndim)):
            raise DimensionError(f"Invalid permutation {tuple(axes)} for tensor of rank {x.ndim}")
        self.axes = tuple(a % x.ndim for a in axes)
        return np.transpose(x, self.axes)

    def backward(self, grad):
        return (np.transpose(grad, np.argsort(self.axes)),)


class Reshape(Function):
    def forward(self, x, shape: Sequence[int] = ()):
        self.in_shape = x.shape
        try:
            return x.reshape(shape)
        except ValueError:
            raise DimensionError(f"Cannot reshape {x.shape} into {tuple(shape)}")

    def backward(self, grad):
        return (grad.reshape(self.in_shape),)


class Concat(Function):
    def forward(self, *arrays, axis: int = 0):
        (self.axis,) = _normalize_axes(axis, arrays[0].ndim)
        self.sizes = [a.shape[self.axis] for a in arrays]
        try:
            return np.concatenate(arrays, axis=self.axis)
        except ValueError as e:
            raise DimensionError(f"concat failed: {e}")

    def backward(self, grad):
        bounds = np.cumsum(self.sizes)[:-1]
        return tuple(np.split(grad, bounds, axis=self.axis))


class Slice(Function):
    def forward(self, x, index=None):
        self.in_shape = x.shape
        self.index = index
        try:
            return x[index]
        except IndexError as e:
            raise DimensionError(f"slice failed: {e}")

    def backward(self, grad):
        full = np.zeros(self.in_shape, dtype=ACCUM_DTYPE)
        full[self.index] = grad
        return (full,)


class GatherRows(Function):
    """out[b, m] = x[b, index[b, m]] along axis 1"""

    def forward(self, x, index: np.ndarray = None):
        index = np.asarray(index, dtype=np.int64)
        if index.ndim != 2 or index.shape[0] != x.shape[0]:
            raise DimensionError(f"gather index {index.shape} incompatible with {x.shape}")
        self.in_shape = x.shape
        self.index = index
        rows = np.arange(x.shape[0])[:, None]
        return x[rows, index]

    def backward(self, grad):
        full = np.zeros(self.in_shape, dtype=ACCUM_DTYPE)
        rows = np.broadcast_to(np.arange(self.in_shape[0])[:, None], self.index.shape)
        np.add.at(full, (rows, self.index), grad)
        return (full,)


class BroadcastTo(Function):
    def forward(self, x, shape: Sequence[int] = ()):
        self.in_shape = x.shape
        try:
            return np.broadcast_to(x, tuple(shape)).copy()
        except ValueError:
            raise DimensionError(f"Cannot broadcast {x.shape} to {tuple(shape)}")

    def backward(self, grad):
        return (_unbroadcast(grad, self.in_shape),)


def transpose(x: Tensor, axes: Sequence[int] = None) -> Tensor:
    return Transpose.apply(x, axes=axes)


def swapaxes(x: Tensor, axis1: int, axis2: int) -> Tensor:
    axes = list(range(x.ndim))
    a1, a2 = _normalize_axes((axis1,), x.ndim)[0], _normalize_axes((axis2,), x.ndim)[0]
    axes[a1], axes[a2] = axes[a2], axes[a1]
    return Transpose.apply(x, axes=tuple(axes))


def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    return Reshape.apply(x, shape=tuple(shape))


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    return Concat.apply(*tensors, axis=axis)


def slice_(x: Tensor, index) -> Tensor:
    return Slice.apply(x, index=index)


def gather_rows(x: Tensor, index: np.ndarray) -> Tensor:
    return GatherRows.apply(x, index=index)


def broadcast_to(x: Tensor, shape: Sequence[int]) -> Tensor:
    return BroadcastTo.apply(x, shape=tuple(shape))


# ---------------------------------------------------------------------------
# Nonlinearities
# ---------------------------------------------------------------------------

class Softmax(Function):
    def forward(self, x, axis: int = -1):
        (self.axis,) = _normalize_axes(axis, x.ndim)
        shifted = x.astype(ACCUM_DTYPE) - x.max(axis=self.axis, keepdims=True)
        e = np.exp(shifted)
        self.y = e / e.sum(axis=self.axis, keepdims=True)
        return self.y

    def backward(self, grad):
        g = grad.astype(ACCUM_DTYPE)
        return (self.y * (g - (g * self.y).sum(axis=self.axis, keepdims=True)),)


class GELU(Function):
    """Tanh approximation: 0.5·x·(1 + tanh(√(2/π)·(x + 0.044715·x³)))"""

    def forward(self, x):
        self.x = x.astype(ACCUM_DTYPE)
        self.t = np.tanh(SQRT_2_OVER_PI * (self.x + GELU_COEFF * self.x ** 3))
        return 0.5 * self.x * (1.0 + self.t)

    def backward(self, grad):
        x, t = self.x, self.t
        dinner = SQRT_2_OVER_PI * (1.0 + 3.0 * GELU_COEFF * x ** 2)
        return (grad * (0.5 * (1.0 + t) + 0.5 * x * (1.0 - t ** 2) * dinner),)


class Sigmoid(Function):
    def forward(self, x):
        self.y = expit(x.astype(ACCUM_DTYPE))
        return self.y

    def backward(self, grad):
        return (grad * self.y * (1.0 - self.y),)


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    return Softmax.apply(x, axis=axis)


def gelu(x: Tensor) -> Tensor:
    return GELU.apply(x)


def sigmoid(x: Tensor) -> Tensor:
    return Sigmoid.apply(x)


# ---------------------------------------------------------------------------
# Layer normalization
# ---------------------------------------------------------------------------

class LayerNormFn(Function):
    def forward(self, x, gamma, beta, eps: float = 1e-6):
        d = x.shape[-1]
        if gamma.shape != (d,) or beta.shape != (d,):
            raise DimensionError(f"layer_norm affine params must be ({d},), got {gamma.shape}/{beta.shape}")
        x64 = x.astype(ACCUM_DTYPE)
        centered = x64 - x64.mean(axis=-1, keepdims=True)
        var = (centered ** 2).mean(axis=-1, keepdims=True)
        self.inv_std = 1.0 / np.sqrt(var + eps)
        self.xhat = centered * self.inv_std
        self.gamma = gamma.astype(ACCUM_DTYPE)
        return self.xhat * self.gamma + beta

    def backward(self, grad):
        g = grad.astype(ACCUM_DTYPE)
        lead = tuple(range(g.ndim - 1))
        grad_gamma = (g * self.xhat).sum(axis=lead)
        grad_beta = g.sum(axis=lead)
        gxhat = g * self.gamma
        grad_x = self.inv_std * (
            gxhat
            - gxhat.mean(axis=-1, keepdims=True)
            - self.xhat * (gxhat * self.xhat).mean(axis=-1, keepdims=True)
        )
        return grad_x, grad_gamma, grad_beta


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-6) -> Tensor:
    return LayerNormFn.apply(x, gamma, beta, eps=eps)


# ---------------------------------------------------------------------------
# 3D convolution and upsampling
# ---------------------------------------------------------------------------

def conv3d_output_shape(in_dims: Sequence[int], kernel, stride, padding) -> Tuple[int, int, int]:
    out = []
    for size, k, s, p in zip(in_dims, kernel, stride, padding):
        n = (size + 2 * p - k) // s + 1
        if n < 1:
            raise DimensionError(
                f"conv3d output dimension {n} < 1 (input {tuple(in_dims)}, kernel {kernel}, "
                f"stride {stride}, padding {padding})"
            )
        out.append(n)
    return tuple(out)


class Conv3d(Function):
    """
    Cross-correlation over [B, C, T, H, W] with weight [O, C, kt, kh, kw].

    Non-overlapping, unpadded convolutions (patch embedding) run as one
    patch-matrix product; everything else loops over kernel offsets.
    """

    def forward(self, x, weight, bias, stride=(1, 1, 1), padding=(0, 0, 0)):
        if x.ndim != 5 or weight.ndim != 5:
            raise DimensionError(f"conv3d expects rank-5 input and weight, got {x.shape} and {weight.shape}")
        if x.shape[1] != weight.shape[1]:
            raise DimensionError(f"conv3d channel mismatch: input {x.shape[1]}, weight {weight.shape[1]}")
        if bias.shape != (weight.shape[0],):
            raise DimensionError(f"conv3d bias must be ({weight.shape[0]},), got {bias.shape}")

        self.kernel = weight.shape[2:]
        self.stride = tuple(stride)
        self.padding = tuple(padding)
        self.in_shape = x.shape
        self.out_dims = conv3d_output_shape(x.shape[2:], self.kernel, self.stride, self.padding)
        self.weight = weight.astype(ACCUM_DTYPE)
        self.patchwise = self.stride == tuple(self.kernel) and self.padding == (0, 0, 0)

        x64 = x.astype(ACCUM_DTYPE)
        if self.patchwise:
            out = self._patch_forward(x64)
        else:
            pt, ph, pw = self.padding
            self.xp = np.pad(x64, ((0, 0), (0, 0), (pt, pt), (ph, ph), (pw, pw)))
            out = np.zeros((x.shape[0],) + self.out_dims + (weight.shape[0],), dtype=ACCUM_DTYPE)
            for offset, window in self._windows():
                out += np.tensordot(self.xp[window], self.weight[(slice(None), slice(None)) + offset],
                                    axes=([1], [1]))
            out = np.moveaxis(out, -1, 1)
        return out + bias.astype(ACCUM_DTYPE).reshape(1, -1, 1, 1, 1)

    def _windows(self):
        (kt, kh, kw), (st, sh, sw) = self.kernel, self.stride
        to, ho, wo = self.out_dims
        for dt in range(kt):
            for dh in range(kh):
                for dw in range(kw):
                    window = (slice(None), slice(None),
                              slice(dt, dt + st * (to - 1) + 1, st),
                              slice(dh, dh + sh * (ho - 1) + 1, sh),
                              slice(dw, dw + sw * (wo - 1) + 1, sw))
                    yield (dt, dh, dw), window

    def _patch_matrix(self, x64):
        b, c = x64.shape[:2]
        (kt, kh, kw), (to, ho, wo) = self.kernel, self.out_dims
        cropped = x64[:, :, :to * kt, :ho * kh, :wo * kw]
        patches = cropped.reshape(b, c, to, kt, ho, kh, wo, kw).transpose(0, 2, 4, 6, 1, 3, 5, 7)
        return patches.reshape(b * to * ho * wo, c * kt * kh * kw)

    def _patch_forward(self, x64):
        b = x64.shape[0]
        o = self.weight.shape[0]
        self.patches = self._patch_matrix(x64)
        out = self.patches @ self.weight.reshape(o, -1).T
        return out.reshape((b,) + self.out_dims + (o,)).transpose(0, 4, 1, 2, 3)

    def backward(self, grad):
        g = np.moveaxis(grad.astype(ACCUM_DTYPE), 1, -1)
        grad_bias = g.sum(axis=(0, 1, 2, 3))
        o = self.weight.shape[0]

        if self.patchwise:
            g2 = g.reshape(-1, o)
            grad_weight = (g2.T @ self.patches).reshape(self.weight.shape)
            gpatch = g2 @ self.weight.reshape(o, -1)
            b, c = self.in_shape[:2]
            (kt, kh, kw), (to, ho, wo) = self.kernel, self.out_dims
            gpatch = gpatch.reshape(b, to, ho, wo, c, kt, kh, kw).transpose(0, 4, 1, 5, 2, 6, 3, 7)
            grad_x = np.zeros(self.in_shape, dtype=ACCUM_DTYPE)
            grad_x[:, :, :to * kt, :ho * kh, :wo * kw] = gpatch.reshape(b, c, to * kt, ho * kh, wo * kw)
            return grad_x, grad_weight, grad_bias

        grad_weight = np.zeros_like(self.weight)
        grad_xp = np.zeros_like(self.xp)
        for offset, window in self._windows():
            kernel_index = (slice(None), slice(None)) + offset
            grad_weight[kernel_index] = np.tensordot(g, self.xp[window], axes=([0, 1, 2, 3], [0, 2, 3, 4]))
            grad_xp[window] += np.moveaxis(np.tensordot(g, self.weight[kernel_index], axes=([4], [0])), -1, 1)

        pt, ph, pw = self.padding
        t, h, w = self.in_shape[2:]
        grad_x = grad_xp[:, :, pt:pt + t, ph:ph + h, pw:pw + w]
        return grad_x, grad_weight, grad_bias


def conv3d(x: Tensor, weight: Tensor, bias: Tensor,
           stride: Sequence[int] = (1, 1, 1), padding: Sequence[int] = (0, 0, 0)) -> Tensor:
    return Conv3d.apply(x, weight, bias, stride=tuple(stride), padding=tuple(padding))


class NearestUpsample2x(Function):
    def forward(self, x):
        if x.ndim < 2:
            raise DimensionError(f"nearest upsample needs rank >= 2, got shape {x.shape}")
        self.in_shape = x.shape
        return x.repeat(2, axis=-2).repeat(2, axis=-1)

    def backward(self, grad):
        h, w = self.in_shape[-2:]
        lead = self.in_shape[:-2]
        return (grad.reshape(lead + (h, 2, w, 2)).sum(axis=(-3, -1)),)


def nearest_upsample2x_spatial(x: Tensor) -> Tensor:
    """Double the last two axes by pixel replication"""
    return NearestUpsample2x.apply(x)
