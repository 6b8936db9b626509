import math
import os
import sys
import unittest

import numpy as np
import pytest

# Add the service root to the path
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from dsp.clip_builder import (
    DspConfig,
    RadarClip,
    bilinear_resize,
    build_clips,
    resize_matrix,
    target_frame_indices,
    to_clip,
)
from dsp.spectral import frame_maps, iq_to_rad, range_fft, rad_to_ra, rad_to_rd
from radar_sim.radar_config import RadarConfig
from radar_sim.scene_generator import SceneConfig, build_scene, synthesize_clip
from radar_sim.synthesizer import Scatterer, synthesize_frame


def expected_bins(cfg: RadarConfig, scatterer: Scatterer, angle_fft_size: int = 64):
    return (cfg.range_bin(scatterer.range),
            cfg.doppler_bin(scatterer.radial_velocity),
            cfg.angle_bin(scatterer.azimuth, angle_fft_size))


def check_peak(cfg: RadarConfig, scatterer: Scatterer):
    """Assert the RAD cube of a noiseless single-scatterer frame peaks within one bin of the oracle"""
    rad = iq_to_rad(synthesize_frame([scatterer], cfg), 64)
    peak = np.unravel_index(np.argmax(rad), rad.shape)
    for axis, (got, want) in enumerate(zip(peak, expected_bins(cfg, scatterer))):
        assert abs(got - want) <= 1.0, f"axis {axis}: peak {got}, expected {want:.2f} for {scatterer}"


def random_scatterers(cfg: RadarConfig, count: int, seed: int):
    rng = np.random.default_rng(seed)
    return [
        Scatterer(range=float(rng.uniform(0.5, 0.9 * cfg.max_range)),
                  radial_velocity=float(rng.uniform(-0.8, 0.8) * cfg.max_velocity),
                  azimuth=float(rng.uniform(-math.radians(60), math.radians(60))))
        for _ in range(count)
    ]


def test_single_scatterer_peak_matches_bin_oracle():
    print("\n✓ Test: RAD peak lands on the predicted range/Doppler/angle bin")

    cfg = RadarConfig(noise_std=0.0)
    check_peak(cfg, Scatterer(range=2.0, radial_velocity=0.0, azimuth=0.0))
    check_peak(cfg, Scatterer(range=3.5, radial_velocity=1.2, azimuth=math.radians(30)))
    for scatterer in random_scatterers(cfg, 3, seed=8):
        check_peak(cfg, scatterer)

    print("  5 scenes within one bin on every axis")


def test_thirty_degrees_lands_on_bin_48():
    cfg = RadarConfig(noise_std=0.0)
    rad = iq_to_rad(synthesize_frame([Scatterer(2.0, 0.0, math.radians(30))], cfg))
    assert np.unravel_index(np.argmax(rad), rad.shape)[2] == 48


def test_range_fft_obeys_parseval():
    rng = np.random.default_rng(0)
    cube = rng.normal(size=(5, 16, 4)) + 1j * rng.normal(size=(5, 16, 4))
    energy_in = np.sum(np.abs(cube) ** 2)
    energy_out = np.sum(np.abs(range_fft(cube)) ** 2)
    assert energy_out == pytest.approx(16 * energy_in, rel=1e-9)


def test_projection_shapes():
    cfg = RadarConfig(n_adc=32, n_chirps=31)
    iq = synthesize_frame([Scatterer(2.0, 0.4, 0.2)], cfg, 3)
    rad = iq_to_rad(iq, 64)
    assert rad.shape == (32, 31, 64)
    assert rad.dtype == np.float32

    rd, ra = frame_maps(iq, 64)
    assert rd.shape == (32, 31)
    assert ra.shape == (32, 64)
    np.testing.assert_array_equal(rd, rad_to_rd(rad))
    np.testing.assert_array_equal(ra, rad_to_ra(rad))
    assert rd.max() == rad.max() == ra.max()

    with pytest.raises(ValueError):
        iq_to_rad(iq[0])
    with pytest.raises(ValueError):
        iq_to_rad(iq, angle_fft_size=4)


class TestClipBuilder(unittest.TestCase):
    """Resizing, normalization and label selection of spectrogram clips"""

    def setUp(self):
        self.cfg = DspConfig(n_frames=8, height=16, width=16)
        rng = np.random.default_rng(1)
        self.maps = [rng.uniform(0, 50, size=(40, 30)) for _ in range(8)]
        self.labels = rng.uniform(0, 1, size=(8, 13, 2))

    def test_target_frames(self):
        """One supervised frame per 4-frame temporal unit, starting at frame 1"""
        self.assertEqual(target_frame_indices(20), [1, 5, 9, 13, 17])
        self.assertEqual(target_frame_indices(8), [1, 5])
        self.assertEqual(DspConfig().n_target_frames, 5)
        self.assertEqual(self.cfg.n_target_frames, 2)

    def test_resize_weights(self):
        for in_size, out_size in [(7, 16), (256, 224), (255, 224), (40, 16)]:
            weights = resize_matrix(in_size, out_size)
            self.assertEqual(weights.shape, (out_size, in_size))
            np.testing.assert_allclose(weights.sum(axis=1), 1.0, atol=1e-12)
            self.assertTrue(np.all(weights >= 0))
        np.testing.assert_allclose(resize_matrix(9, 9), np.eye(9), atol=1e-12)

    def test_resize_preserves_constants(self):
        frames = np.full((2, 13, 9), 3.5)
        np.testing.assert_allclose(bilinear_resize(frames, 224, 224), 3.5)

    def test_clip_is_min_max_normalized(self):
        clip = to_clip(self.maps, self.labels, (3.0, 4.0), 'rd', cfg=self.cfg)
        self.assertEqual(clip.frames.shape, (8, 16, 16))
        self.assertEqual(clip.frames.dtype, np.float32)
        self.assertAlmostEqual(float(clip.frames.min()), 0.0, places=6)
        self.assertAlmostEqual(float(clip.frames.max()), 1.0, places=6)
        self.assertFalse(clip.degenerate)
        np.testing.assert_allclose(clip.labels, self.labels[[1, 5]].astype(np.float32))

    def test_constant_clip_is_degenerate(self):
        """A constant clip becomes all zeros with a DEGENERATE_CLIP issue instead of dividing by zero"""
        maps = [np.full((40, 30), 7.0)] * 8
        clip = to_clip(maps, self.labels, (3.0, 4.0), 'ra', person_id=2, action_id=5, cfg=self.cfg)
        self.assertTrue(clip.degenerate)
        self.assertFalse(np.any(clip.frames))
        self.assertEqual(clip.issues[0]['type'], 'DEGENERATE_CLIP')
        self.assertEqual(clip.issues[0]['severity'], 'HIGH')

    def test_input_validation(self):
        with self.assertRaises(ValueError):
            to_clip(self.maps[:7], self.labels, (3.0, 4.0), 'rd', cfg=self.cfg)
        with self.assertRaises(ValueError):
            to_clip(self.maps, self.labels + 1.0, (3.0, 4.0), 'rd', cfg=self.cfg)
        with self.assertRaises(ValueError):
            to_clip(self.maps, self.labels, (3.0, 4.0), 'doppler', cfg=self.cfg)
        with self.assertRaises(ValueError):
            RadarClip(frames=np.zeros((8, 4, 4)), modality='rd', labels=self.labels,
                      metres_per_unit=(0.0, 4.0), person_id=0, action_id=0)

    def test_validate(self):
        self.assertEqual(DspConfig().validate(), [])
        self.assertTrue(DspConfig(n_frames=7).validate())


def test_build_clips_from_simulated_iq():
    print("\n✓ Test: IQ clip -> RD and RA spectrogram videos")

    radar = RadarConfig(n_adc=32, n_chirps=31)
    scene = build_scene(0, 1, 0, False, 2, SceneConfig(n_frames=8), radar.frame_rate)
    iq = synthesize_clip(scene, radar, 2)
    cfg = DspConfig(n_frames=8, height=16, width=16)

    clips = build_clips(iq, scene.labels(), scene.metres_per_unit, ('rd', 'ra'),
                        person_id=0, action_id=1, cfg=cfg)

    assert set(clips) == {'rd', 'ra'}
    for modality, clip in clips.items():
        assert clip.modality == modality
        assert clip.frames.shape == (8, 16, 16)
        assert clip.labels.shape == (2, 13, 2)
        assert 0.0 <= clip.frames.min() and clip.frames.max() <= 1.0
        assert clip.metres_per_unit == (3.0, 4.0)
    np.testing.assert_array_equal(clips['rd'].labels, clips['ra'].labels)


if __name__ == "__main__":
    print("=" * 60)
    print("SIGNAL PROCESSING TESTS")
    print("=" * 60)
    pytest.main([__file__, '-v'])
