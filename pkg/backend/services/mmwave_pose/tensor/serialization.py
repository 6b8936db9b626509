"""
RVT1 Tensor Files
Binary container for a single float32 array, shared by checkpoints and datasets

Layout: magic b"RVT1", u8 dtype code (0 = float32), u8 ndim,
ndim x u32 little-endian dims, then the row-major little-endian payload.
"""

import logging
import struct
from pathlib import Path
from typing import Tuple, Union

import numpy as np

logger = logging.getLogger(__name__)

MAGIC = b"RVT1"
DTYPE_CODES = {0: np.dtype('<f4')}
HEADER_PREFIX = struct.Struct('<4sBB')


class TensorFormatError(Exception):
    """Raised when a file does not follow the RVT1 layout"""
    pass


def encode_tensor(array: np.ndarray) -> bytes:
    array = np.asarray(array)
    if array.ndim > 255:
        raise TensorFormatError(f"Rank {array.ndim} exceeds the RVT1 limit of 255")
    payload = np.ascontiguousarray(array, dtype=DTYPE_CODES[0])
    header = HEADER_PREFIX.pack(MAGIC, 0, payload.ndim)
    dims = struct.pack(f'<{payload.ndim}I', *payload.shape)
    return header + dims + payload.tobytes(order='C')


def _parse_header(buffer: bytes, source: str) -> Tuple[Tuple[int, ...], np.dtype, int]:
    if len(buffer) < HEADER_PREFIX.size:
        raise TensorFormatError(f"{source}: truncated header")
    magic, dtype_code, ndim = HEADER_PREFIX.unpack_from(buffer, 0)
    if magic != MAGIC:
        raise TensorFormatError(f"{source}: bad magic {magic!r}")
    if dtype_code not in DTYPE_CODES:
        raise TensorFormatError(f"{source}: unknown dtype code {dtype_code}")
    dims_end = HEADER_PREFIX.size + 4 * ndim
    if len(buffer) < dims_end:
        raise TensorFormatError(f"{source}: truncated dimension table")
    shape = struct.unpack_from(f'<{ndim}I', buffer, HEADER_PREFIX.size)
    return tuple(int(d) for d in shape), DTYPE_CODES[dtype_code], dims_end


def decode_tensor(buffer: bytes, source: str = '<bytes>') -> np.ndarray:
    shape, dtype, offset = _parse_header(buffer, source)
    expected = int(np.prod(shape, dtype=np.int64)) * dtype.itemsize
    if len(buffer) - offset != expected:
        raise TensorFormatError(
            f"{source}: payload is {len(buffer) - offset} bytes, header implies {expected}"
        )
    return np.frombuffer(buffer, dtype=dtype, offset=offset).reshape(shape).astype(np.float32)


def save_tensor(path: Union[str, Path], array: np.ndarray):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode_tensor(array))


def load_tensor(path: Union[str, Path]) -> np.ndarray:
    path = Path(path)
    if not path.exists():
        raise TensorFormatError(f"{path}: file not found")
    return decode_tensor(path.read_bytes(), source=str(path))


def read_header(path: Union[str, Path]) -> Tuple[int, ...]:
    """Return the shape stored in a tensor file without reading the payload"""
    path = Path(path)
    if not path.exists():
        raise TensorFormatError(f"{path}: file not found")
    with open(path, 'rb') as f:
        prefix = f.read(HEADER_PREFIX.size)
        if len(prefix) == HEADER_PREFIX.size:
            prefix += f.read(4 * prefix[5])
    shape, _, _ = _parse_header(prefix, str(path))
    return shape
