import os
import struct
import sys

import numpy as np
import pytest

# Add the service root to the path
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from tensor.serialization import (
    MAGIC,
    TensorFormatError,
    decode_tensor,
    encode_tensor,
    load_tensor,
    read_header,
    save_tensor,
)


def test_byte_layout():
    """Header is magic, dtype 0, ndim, u32 dims; payload is little-endian float32"""
    print("\n✓ Test: RVT1 byte layout")

    array = np.array([[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]], dtype=np.float32)
    blob = encode_tensor(array)

    assert blob[:4] == MAGIC
    assert blob[4] == 0
    assert blob[5] == 2
    assert struct.unpack('<2I', blob[6:14]) == (2, 3)
    assert len(blob) == 14 + 6 * 4
    assert struct.unpack('<6f', blob[14:]) == (1.0, 2.0, 3.0, 4.0, 5.0, 6.0)

    print("  Layout verified: 14-byte header + 24-byte payload")


def test_file_round_trip_preserves_bits(tmp_path):
    print("\n✓ Test: save/load keeps every float32 bit")

    rng = np.random.default_rng(3)
    array = rng.normal(size=(4, 5, 6)).astype(np.float32)
    array[0, 0, 0] = np.float32(-0.0)
    path = tmp_path / 'nested' / 'x.rvt'

    save_tensor(path, array)
    loaded = load_tensor(path)

    assert loaded.dtype == np.float32
    assert loaded.shape == (4, 5, 6)
    assert loaded.tobytes() == array.tobytes()
    assert read_header(path) == (4, 5, 6)


def test_scalar_and_empty_tensors():
    scalar = decode_tensor(encode_tensor(np.float32(2.5)))
    assert scalar.shape == ()
    assert float(scalar) == 2.5

    empty = decode_tensor(encode_tensor(np.zeros((0, 3), dtype=np.float32)))
    assert empty.shape == (0, 3)


def test_float64_input_is_stored_as_float32():
    blob = encode_tensor(np.array([0.1, 0.2], dtype=np.float64))
    assert len(blob) == 6 + 4 + 8
    assert decode_tensor(blob).dtype == np.float32


@pytest.mark.parametrize('mutate, message', [
    (lambda b: b'XVT1' + b[4:], 'bad magic'),
    (lambda b: b[:4] + bytes([7]) + b[5:], 'unknown dtype'),
    (lambda b: b[:-1], 'payload'),
    (lambda b: b + b'\x00\x00\x00\x00', 'payload'),
    (lambda b: b[:8], 'dimension table'),
    (lambda b: b[:3], 'truncated header'),
])
def test_malformed_buffers_raise(mutate, message):
    print(f"\n✓ Test: malformed buffer -> {message}")
    blob = encode_tensor(np.ones((2, 3), dtype=np.float32))
    with pytest.raises(TensorFormatError, match=message):
        decode_tensor(mutate(blob))


def test_missing_file_raises(tmp_path):
    with pytest.raises(TensorFormatError):
        load_tensor(tmp_path / 'absent.rvt')
    with pytest.raises(TensorFormatError):
        read_header(tmp_path / 'absent.rvt')


if __name__ == "__main__":
    print("=" * 60)
    print("RVT1 TENSOR FILE TESTS")
    print("=" * 60)
    pytest.main([__file__, '-v'])
