import os
import sys

import numpy as np
import pytest

# Add the service root to the path
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from evaluation.metrics import PCK_THRESHOLD_M, joint_errors, mpjpe, pck
from tensor.autograd import DimensionError


def brute_force_errors(pred, gt, scale):
    out = np.zeros(pred.shape[:-1])
    for idx in np.ndindex(*pred.shape[:-1]):
        dx = (pred[idx][0] - gt[idx][0]) * scale[0]
        dy = (pred[idx][1] - gt[idx][1]) * scale[1]
        out[idx] = (dx * dx + dy * dy) ** 0.5
    return out


def test_three_four_five_triangle():
    print("\n✓ Test: normalized offsets scale to metres per axis")

    pred = np.zeros((1, 1, 2))
    gt = np.full((1, 1, 2), 0.01)
    assert mpjpe(pred, gt, (3.0, 4.0)) == pytest.approx(0.05, abs=1e-12)

    print("  (0.01, 0.01) in a 3 m x 4 m room is 5 cm")


def test_pck_threshold_is_inclusive():
    pred = np.zeros((1, 3, 2))
    gt = np.array([[[0.01, 0.01], [0.0, 0.049 / 4.0], [0.0, 0.051 / 4.0]]])
    assert PCK_THRESHOLD_M == 0.05
    assert pck(pred, gt, (3.0, 4.0)) == pytest.approx(2.0 / 3.0)


def test_pck_half_and_half():
    pred = np.zeros((2, 4, 2))
    gt = np.zeros((2, 4, 2))
    gt[:, :2, 0] = 0.5
    assert pck(pred, gt, (3.0, 4.0)) == pytest.approx(0.5)
    assert mpjpe(pred, gt, (3.0, 4.0)) == pytest.approx(0.75)


def test_matches_brute_force_loops():
    rng = np.random.default_rng(3)
    pred = rng.uniform(0, 1, size=(4, 5, 13, 2))
    gt = rng.uniform(0, 1, size=(4, 5, 13, 2))
    expected = brute_force_errors(pred, gt, (3.0, 4.0))

    np.testing.assert_allclose(joint_errors(pred, gt, (3.0, 4.0)), expected, rtol=1e-12)
    assert mpjpe(pred, gt, (3.0, 4.0)) == pytest.approx(float(expected.mean()), rel=1e-12)
    assert pck(pred, gt, (3.0, 4.0), threshold=0.5) == pytest.approx(float(np.mean(expected <= 0.5)))


def test_per_clip_scales():
    """A [N, 2] scale array applies one room size per clip"""
    pred = np.zeros((2, 5, 13, 2))
    gt = np.full((2, 5, 13, 2), 0.1)
    errors = joint_errors(pred, gt, np.array([[3.0, 4.0], [6.0, 8.0]]))
    np.testing.assert_allclose(errors[0], 0.5, rtol=1e-12)
    np.testing.assert_allclose(errors[1], 1.0, rtol=1e-12)


def test_perfect_prediction():
    gt = np.random.default_rng(0).uniform(0, 1, size=(3, 13, 2))
    assert mpjpe(gt, gt, (3.0, 4.0)) == 0.0
    assert pck(gt, gt, (3.0, 4.0)) == 1.0


def test_invalid_inputs():
    pred = np.zeros((2, 13, 2))
    with pytest.raises(DimensionError):
        mpjpe(pred, np.zeros((2, 12, 2)), (3.0, 4.0))
    with pytest.raises(DimensionError):
        mpjpe(np.zeros((2, 13, 3)), np.zeros((2, 13, 3)), (3.0, 4.0))
    with pytest.raises(DimensionError):
        mpjpe(pred, pred, (3.0, 4.0, 5.0))
    with pytest.raises(ValueError):
        mpjpe(pred, pred, (0.0, 4.0))
    with pytest.raises(ValueError):
        pck(pred, pred, (-3.0, 4.0))


if __name__ == "__main__":
    print("=" * 60)
    print("POSE METRIC TESTS")
    print("=" * 60)
    pytest.main([__file__, '-v'])
