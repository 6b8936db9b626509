"""
Heatmap Targets and Decoding
Gaussian joint heatmaps, the weighted heatmap loss and argmax-to-skeleton
"""

import logging
from typing import Dict, List, Tuple

import numpy as np

from tensor import ops
from tensor.autograd import DimensionError, Tensor, constant

logger = logging.getLogger(__name__)


def gaussian_targets(labels: np.ndarray, size: int = 56, sigma: float = 2.0) -> Tuple[np.ndarray, List[Dict]]:
    """
    Render one unnormalized Gaussian per joint.

    Args:
        labels: [..., K, 2] normalized (x, y) joint coordinates
        size: heatmap height and width
        sigma: Gaussian standard deviation in heatmap pixels; sigma <= 0
            renders a single hot pixel at the nearest cell

    Returns:
        (heatmaps [..., K, size, size], issues) where issues records labels
        that had to be clamped into [0, 1]
    """
    labels = np.asarray(labels, dtype=np.float64)
    if labels.shape[-1] != 2:
        raise DimensionError(f"labels must end in a coordinate pair, got {labels.shape}")

    issues = []
    out_of_range = (labels < 0.0) | (labels > 1.0)
    if out_of_range.any():
        issues.append({
            'type': 'LABEL_CLAMPED',
            'severity': 'MEDIUM',
            'action': 'flag',
            'count': int(out_of_range.any(axis=-1).sum()),
            'message': f"{int(out_of_range.any(axis=-1).sum())} joint label(s) outside [0, 1] were clamped",
        })
        logger.warning(issues[-1]['message'])
        labels = np.clip(labels, 0.0, 1.0)

    u = labels[..., 1] * size
    v = labels[..., 0] * size
    rows = np.arange(size, dtype=np.float64)

    if sigma <= 0:
        heatmaps = np.zeros(labels.shape[:-1] + (size, size), dtype=np.float32)
        ui = np.clip(np.floor(u + 0.5), 0, size - 1).astype(int)
        vi = np.clip(np.floor(v + 0.5), 0, size - 1).astype(int)
        flat = heatmaps.reshape(-1, size, size)
        flat[np.arange(flat.shape[0]), ui.reshape(-1), vi.reshape(-1)] = 1.0
        return heatmaps, issues

    gy = np.exp(-((rows - u[..., None]) ** 2) / (2 * sigma ** 2))
    gx = np.exp(-((rows - v[..., None]) ** 2) / (2 * sigma ** 2))
    heatmaps = gy[..., :, None] * gx[..., None, :]
    return heatmaps.astype(np.float32), issues


def heatmap_weights(target: np.ndarray, fg_weight: float, threshold: float = 0.01) -> np.ndarray:
    return np.where(target > threshold, fg_weight, 1.0).astype(np.float32)


def heatmap_loss(pred: Tensor, target: np.ndarray, fg_weight: float = 10.0, threshold: float = 0.01) -> Tensor:
    """Mean of w * (pred - target)^2, w = fg_weight where target > threshold else 1"""
    target = np.asarray(target, dtype=np.float32)
    if pred.shape != target.shape:
        raise DimensionError(f"heatmap prediction {pred.shape} vs target {target.shape}")
    diff = ops.sub(pred, constant(target))
    weighted = ops.mul(ops.mul(diff, diff), constant(heatmap_weights(target, fg_weight, threshold)))
    return ops.mean(weighted)


def heatmaps_to_skeleton(heatmaps: np.ndarray) -> np.ndarray:
    """
    Per-joint argmax (first hit in row-major order) mapped to normalized
    coordinates: x = column / W, y = row / H. [..., K, H, W] -> [..., K, 2]
    """
    heatmaps = np.asarray(heatmaps)
    h, w = heatmaps.shape[-2:]
    flat = heatmaps.reshape(heatmaps.shape[:-2] + (h * w,))
    index = np.argmax(flat, axis=-1)
    rows, cols = np.divmod(index, w)
    return np.stack([cols / w, rows / h], axis=-1).astype(np.float32)
