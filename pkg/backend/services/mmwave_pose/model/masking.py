"""
Random Token Masking
Uniform spatiotemporal masking plans for masked-autoencoder pretraining
"""

import logging
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class MaskPlan:
    """Sorted visible and masked token indices of one clip"""
    visible: np.ndarray
    masked: np.ndarray
    seed: Optional[int]

    @property
    def n_tokens(self) -> int:
        return len(self.visible) + len(self.masked)

    @property
    def ids_restore(self) -> np.ndarray:
        """Position of each original token within concat(visible, masked)"""
        return np.argsort(np.concatenate([self.visible, self.masked]), kind='stable')


def sample_mask(n_tokens: int, mask_ratio: float, seed: Optional[int]) -> MaskPlan:
    """
    Sample round(mask_ratio * n_tokens) masked tokens uniformly without replacement.

    Rounding is half-up. A ratio that masks nothing or everything is rejected.
    """
    if not 0.0 < mask_ratio < 1.0:
        raise ValueError(f"mask_ratio must lie in (0, 1), got {mask_ratio}")
    n_masked = int(np.floor(mask_ratio * n_tokens + 0.5))
    if n_masked == 0 or n_masked == n_tokens:
        raise ValueError(
            f"mask_ratio {mask_ratio} masks {n_masked} of {n_tokens} tokens; "
            f"need at least one masked and one visible token"
        )
    order = np.random.default_rng(seed).permutation(n_tokens)
    return MaskPlan(visible=np.sort(order[n_masked:]), masked=np.sort(order[:n_masked]), seed=seed)


@dataclass(frozen=True)
class MaskBatch:
    """Per-clip plans stacked for gather operations"""
    plans: Sequence[MaskPlan]

    @property
    def visible(self) -> np.ndarray:
        return np.stack([p.visible for p in self.plans])

    @property
    def masked(self) -> np.ndarray:
        return np.stack([p.masked for p in self.plans])

    @property
    def ids_restore(self) -> np.ndarray:
        return np.stack([p.ids_restore for p in self.plans])

    def __len__(self) -> int:
        return len(self.plans)


def sample_batch_masks(n_tokens: int, mask_ratio: float, seeds: Sequence[int]) -> MaskBatch:
    return MaskBatch(plans=[sample_mask(n_tokens, mask_ratio, s) for s in seeds])
