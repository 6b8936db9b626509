"""
Pose Metrics
MPJPE and PCK in metres from normalized 2D joint coordinates
"""

import logging

import numpy as np

from tensor.autograd import DimensionError

logger = logging.getLogger(__name__)

PCK_THRESHOLD_M = 0.05


def _scales(metres_per_unit, ndim: int) -> np.ndarray:
    """
    Broadcastable (sx, sy) scales.

    A single pair applies to every joint; a [N, 2] array gives one pair per
    leading item (clip) of the coordinate arrays.
    """
    scale = np.asarray(metres_per_unit, dtype=np.float64)
    if scale.ndim == 0:
        scale = np.array([scale, scale])
    if scale.shape[-1] != 2:
        raise DimensionError(f"metres_per_unit must end in an (sx, sy) pair, got {scale.shape}")
    if np.any(scale <= 0):
        raise ValueError("metres_per_unit scales must be positive")
    if scale.ndim == 2:
        scale = scale.reshape((scale.shape[0],) + (1,) * (ndim - 2) + (2,))
    return scale


def joint_errors(pred: np.ndarray, gt: np.ndarray, metres_per_unit) -> np.ndarray:
    """Euclidean error in metres for every joint of every frame, shape pred.shape[:-1]"""
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape:
        raise DimensionError(f"prediction shape {pred.shape} does not match ground truth {gt.shape}")
    if pred.ndim < 2 or pred.shape[-1] != 2:
        raise DimensionError(f"joint arrays must end in [K, 2], got {pred.shape}")
    delta = (pred - gt) * _scales(metres_per_unit, pred.ndim)
    return np.sqrt(np.sum(delta * delta, axis=-1))


def mpjpe(pred: np.ndarray, gt: np.ndarray, metres_per_unit) -> float:
    return float(np.mean(joint_errors(pred, gt, metres_per_unit)))


def pck(pred: np.ndarray, gt: np.ndarray, metres_per_unit, threshold: float = PCK_THRESHOLD_M) -> float:
    """Fraction of joints with error <= threshold metres (boundary inclusive)"""
    errors = joint_errors(pred, gt, metres_per_unit)
    within = (errors <= threshold) | np.isclose(errors, threshold, rtol=0.0, atol=1e-12)
    return float(np.mean(within))
