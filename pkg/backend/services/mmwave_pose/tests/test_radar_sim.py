import math
import os
import sys
import unittest

import numpy as np
import pytest

# Add the service root to the path
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from radar_sim.radar_config import RadarConfig
from radar_sim.scene_generator import (
    SceneConfig,
    build_scene,
    generate_dataset,
    iter_dataset,
    scene_labels_only,
    synthesize_clip,
)
from radar_sim.skeleton import N_JOINTS, PROGRAM_NAMES, animate, program_for_action
from radar_sim.synthesizer import IQ_DTYPE, AliasingError, Scatterer, synthesize_frame
from seeding import derive_rng, derive_seed

# Same unambiguous range and velocity as the default sensor, far fewer samples
SMALL_RADAR = RadarConfig(n_adc=32, n_chirps=31)
SHORT_SCENE = SceneConfig(n_frames=4)


class TestRadarConfig(unittest.TestCase):
    """Derived resolutions and validation of the FMCW parameters"""

    def test_default_resolutions(self):
        """Default chirp gives ~4.26 cm range bins and ~4.77 cm/s Doppler bins"""
        cfg = RadarConfig()
        self.assertAlmostEqual(cfg.range_resolution, 0.042586, places=5)
        self.assertAlmostEqual(cfg.doppler_resolution, 0.047654, places=5)
        self.assertEqual(cfg.doppler_zero_bin, 127)
        self.assertAlmostEqual(cfg.max_range, 256 * cfg.range_resolution, places=9)
        self.assertAlmostEqual(cfg.max_velocity, 127.5 * cfg.doppler_resolution, places=9)

    def test_angle_bin_of_half_wavelength_array(self):
        cfg = RadarConfig()
        self.assertAlmostEqual(cfg.angle_bin(0.0), 32.0, places=6)
        self.assertAlmostEqual(cfg.angle_bin(math.radians(30)), 48.0, places=6)
        self.assertAlmostEqual(cfg.angle_bin(math.radians(-30)), 16.0, places=6)

    def test_compact_radar_keeps_room_unambiguous(self):
        """The 128-sample compact chirp still covers a 5 m deep room"""
        cfg = RadarConfig(adc_rate=2.4e6, n_adc=128, n_chirps=63, chirp_interval=640.8e-6)
        self.assertAlmostEqual(cfg.max_range, 5.45, places=2)
        self.assertGreater(cfg.max_velocity, 1.5)
        self.assertEqual(cfg.validate(), [])

    def test_validate(self):
        self.assertEqual(RadarConfig().validate(), [])

        problems = RadarConfig(n_adc=0, noise_std=-1.0).validate()
        self.assertIn("n_adc must be >= 1", problems)
        self.assertIn("noise_std must be non-negative", problems)

        too_long = RadarConfig(chirp_interval=1e-3).validate()
        self.assertTrue(any('frame period' in p for p in too_long))

    def test_summary_keys(self):
        summary = RadarConfig().summary()
        self.assertEqual(set(summary), {'range_resolution_m', 'doppler_resolution_mps',
                                        'max_range_m', 'max_velocity_mps'})


class TestSynthesizer(unittest.TestCase):
    """Point-scatterer IQ synthesis"""

    def test_scatterer_rejects_bad_geometry(self):
        with self.assertRaises(ValueError):
            Scatterer(range=0.0, radial_velocity=0.0, azimuth=0.0)
        with self.assertRaises(ValueError):
            Scatterer(range=1.0, radial_velocity=0.0, azimuth=math.pi / 2)

    def test_aliasing_is_refused(self):
        cfg = RadarConfig()
        with self.assertRaises(AliasingError):
            synthesize_frame([Scatterer(range=cfg.max_range + 0.1, radial_velocity=0.0, azimuth=0.0)], cfg, 0)
        with self.assertRaises(AliasingError):
            synthesize_frame([Scatterer(range=2.0, radial_velocity=-cfg.max_velocity, azimuth=0.0)], cfg, 0)

    def test_cube_shape_and_dtype(self):
        cube = synthesize_frame([Scatterer(2.0, 0.5, 0.1)], SMALL_RADAR, 1)
        self.assertEqual(cube.shape, (31, 32, 8))
        self.assertEqual(cube.dtype, IQ_DTYPE)

    def test_noise_is_seeded(self):
        """Same seed reproduces the cube bit for bit; another seed does not"""
        scatterers = [Scatterer(2.0, 0.5, 0.1), Scatterer(3.0, -0.2, -0.3, amplitude=3.0)]
        a = synthesize_frame(scatterers, SMALL_RADAR, 11)
        b = synthesize_frame(scatterers, SMALL_RADAR, 11)
        c = synthesize_frame(scatterers, SMALL_RADAR, 12)
        self.assertEqual(a.tobytes(), b.tobytes())
        self.assertFalse(np.array_equal(a, c))

    def test_noise_power(self):
        """Empty scene with noise_std 1 has unit mean power"""
        cube = synthesize_frame([], RadarConfig(noise_std=1.0), 5)
        power = float(np.mean(np.abs(cube.astype(np.complex128)) ** 2))
        self.assertAlmostEqual(power, 1.0, delta=0.02)

    def test_noiseless_single_scatterer_has_unit_magnitude(self):
        cfg = RadarConfig(n_adc=32, n_chirps=31, noise_std=0.0)
        cube = synthesize_frame([Scatterer(1.7, 0.3, 0.2, amplitude=2.0)], cfg)
        np.testing.assert_allclose(np.abs(cube), 2.0, rtol=1e-5)


def test_program_vocabulary():
    print("\n✓ Test: action ids map onto motion programs")

    assert len(PROGRAM_NAMES) == 12
    assert program_for_action(0) == (PROGRAM_NAMES[0], 1.0)
    assert program_for_action(11) == (PROGRAM_NAMES[11], 1.0)
    assert program_for_action(12) == (PROGRAM_NAMES[0], 1.25)
    assert program_for_action(25) == (PROGRAM_NAMES[1], 1.5)

    with pytest.raises(ValueError):
        program_for_action(-1)
    with pytest.raises(KeyError):
        animate('moonwalk', np.arange(3) / 10.0, 1.0, 0.5, 0.0)


def test_animation_shape_and_motion():
    times = np.arange(20) / 10.0
    for program in PROGRAM_NAMES:
        pose = animate(program, times, 1.0, 0.5, 0.3)
        assert pose.shape == (20, N_JOINTS, 2)
        assert np.all(np.isfinite(pose))
        # every program moves at least one joint
        assert np.ptp(pose, axis=0).max() > 1e-3, program


def test_scene_labels_lie_in_unit_square():
    print("\n✓ Test: normalized labels stay within the room")

    scenes = scene_labels_only(persons=3, actions=12, clips_per_pair=2, seed=4)
    assert len(scenes) == 72
    for scene in scenes:
        labels = scene.labels()
        assert labels.shape == (20, N_JOINTS, 2)
        assert labels.dtype == np.float32
        assert labels.min() >= 0.0 and labels.max() <= 1.0
        assert scene.metres_per_unit == (3.0, 4.0)


def test_interference_does_not_change_labels():
    clean = build_scene(1, 3, 0, False, 9, SceneConfig(), 10.0)
    noisy = build_scene(1, 3, 0, True, 9, SceneConfig(), 10.0)

    assert not clean.interference and noisy.interference
    np.testing.assert_array_equal(clean.labels(), noisy.labels())
    assert noisy.bystander.shape == (20, SceneConfig().bystander_scatterers, 2)

    per_frame = noisy.scatterers()
    assert len(per_frame) == 20
    assert len(per_frame[0]) == N_JOINTS + SceneConfig().bystander_scatterers


def test_persons_differ_and_scenes_are_reproducible():
    a = build_scene(0, 2, 1, False, 3, SceneConfig(), 10.0)
    b = build_scene(0, 2, 1, False, 3, SceneConfig(), 10.0)
    other = build_scene(1, 2, 1, False, 3, SceneConfig(), 10.0)
    np.testing.assert_array_equal(a.joints, b.joints)
    assert not np.allclose(a.joints, other.joints)


def test_clip_synthesis_is_deterministic():
    print("\n✓ Test: synthesized IQ clips repeat exactly for a fixed seed")

    scene = build_scene(0, 0, 0, True, 21, SHORT_SCENE, SMALL_RADAR.frame_rate)
    first = synthesize_clip(scene, SMALL_RADAR, 21)
    second = synthesize_clip(scene, SMALL_RADAR, 21)

    assert first.shape == (4, 31, 32, 8)
    assert first.tobytes() == second.tobytes()


def test_iter_dataset_order():
    pairs = list(iter_dataset(2, 2, 1, False, 5, SMALL_RADAR, SHORT_SCENE))
    keys = [(s.person_id, s.action_id, s.clip_index) for s, _ in pairs]
    assert keys == [(0, 0, 0), (0, 1, 0), (1, 0, 0), (1, 1, 0)]

    with pytest.raises(ValueError):
        list(iter_dataset(0, 2, 1, False, 5, SMALL_RADAR, SHORT_SCENE))


def test_generate_dataset_matches_stream():
    eager = generate_dataset(1, 2, 2, True, 8, SMALL_RADAR, SHORT_SCENE)
    streamed = list(iter_dataset(1, 2, 2, True, 8, SMALL_RADAR, SHORT_SCENE))

    assert len(eager) == 4
    for (scene_a, iq_a), (scene_b, iq_b) in zip(eager, streamed):
        assert scene_a.clip_index == scene_b.clip_index
        assert scene_a.bystander is not None
        assert iq_a.tobytes() == iq_b.tobytes()


def test_seed_derivation():
    assert derive_seed(42, 'clip', 1, 2) == derive_seed(42, 'clip', 1, 2)
    assert derive_seed(42, 'clip', 1, 2) != derive_seed(42, 'clip', 2, 1)
    assert derive_seed(42, 'clip', 1) != derive_seed(42, 'noise', 1)
    assert derive_rng(1, 'x').integers(1 << 30) == derive_rng(1, 'x').integers(1 << 30)
    with pytest.raises(ValueError):
        derive_seed(-1, 'clip')


if __name__ == "__main__":
    print("=" * 60)
    print("RADAR SIMULATION TESTS")
    print("=" * 60)
    pytest.main([__file__, '-v'])
