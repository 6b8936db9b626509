"""
Seed Derivation
Every random stream in the pipeline is derived from one root seed

derive_seed(root, tag, *indices) feeds [root, crc32(tag), *indices] into a
numpy SeedSequence and returns its first 32-bit state word. The same
(root, tag, indices) always yields the same stream regardless of the order in
which streams are created or which process creates them.
"""

import zlib
from typing import Sequence

import numpy as np


def _tag_code(tag: str) -> int:
    return zlib.crc32(tag.encode('utf-8')) & 0xFFFFFFFF


def derive_seed(root: int, tag: str, *indices: int) -> int:
    if root < 0 or any(i < 0 for i in indices):
        raise ValueError("Seeds and stream indices must be non-negative")
    entropy: Sequence[int] = [int(root), _tag_code(tag)] + [int(i) for i in indices]
    return int(np.random.SeedSequence(entropy).generate_state(1)[0])


def derive_rng(root: int, tag: str, *indices: int) -> np.random.Generator:
    return np.random.default_rng(derive_seed(root, tag, *indices))
