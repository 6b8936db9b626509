"""Minimal float32 tensor library with reverse-mode autodiff"""

from tensor.autograd import DimensionError, Tensor, no_grad, parameter, constant
from tensor.serialization import TensorFormatError, load_tensor, save_tensor

__all__ = [
    'DimensionError',
    'Tensor',
    'no_grad',
    'parameter',
    'constant',
    'TensorFormatError',
    'load_tensor',
    'save_tensor',
]
