"""
FMCW Frame Synthesizer
Point-scatterer beat-signal model producing one complex IQ cube per frame

Each scatterer contributes
    a * exp(j*2*pi*(f_b*n/adc_rate + f_d*m*chirp_interval + k*spacing*sin(az)/lambda))
with f_b = 2*slope*range/c and f_d = 2*radial_velocity/lambda, over ADC index n,
chirp index m and virtual antenna k (stop-and-hop: the scatterer is frozen
within a chirp). The cube axes are [chirp, adc_sample, antenna].
"""

import logging
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.constants import c as SPEED_OF_LIGHT

from radar_sim.radar_config import RadarConfig

logger = logging.getLogger(__name__)

IQ_DTYPE = np.complex64


class AliasingError(Exception):
    """Raised when a scatterer lies outside the unambiguous range or velocity interval"""
    pass


@dataclass(frozen=True)
class Scatterer:
    """A point reflector seen from the radar at the origin"""
    range: float
    radial_velocity: float
    azimuth: float
    amplitude: float = 1.0

    def __post_init__(self):
        if self.range <= 0:
            raise ValueError(f"Scatterer range must be positive, got {self.range}")
        if not abs(self.azimuth) < np.pi / 2:
            raise ValueError(f"Scatterer azimuth must lie in (-pi/2, pi/2), got {self.azimuth}")


def check_unambiguous(scatterer: Scatterer, cfg: RadarConfig):
    if scatterer.range >= cfg.max_range:
        raise AliasingError(
            f"Range {scatterer.range:.3f} m aliases (unambiguous limit {cfg.max_range:.3f} m)"
        )
    if abs(scatterer.radial_velocity) >= cfg.max_velocity:
        raise AliasingError(
            f"Radial velocity {scatterer.radial_velocity:.3f} m/s aliases "
            f"(unambiguous limit {cfg.max_velocity:.3f} m/s)"
        )


def steering_phasors(scatterers: Sequence[Scatterer], cfg: RadarConfig):
    """Per-scatterer 1D phasors along the chirp, ADC and antenna axes"""
    ranges = np.array([s.range for s in scatterers], dtype=np.float64)
    velocities = np.array([s.radial_velocity for s in scatterers], dtype=np.float64)
    azimuths = np.array([s.azimuth for s in scatterers], dtype=np.float64)

    beat_freq = 2.0 * cfg.slope * ranges / SPEED_OF_LIGHT
    doppler_freq = 2.0 * velocities / cfg.wavelength
    spatial_freq = cfg.antenna_spacing * np.sin(azimuths) / cfg.wavelength

    n = np.arange(cfg.n_adc)
    m = np.arange(cfg.n_chirps)
    k = np.arange(cfg.n_virtual_antennas)

    fast_time = np.exp(2j * np.pi * np.outer(beat_freq, n) / cfg.adc_rate)
    slow_time = np.exp(2j * np.pi * np.outer(doppler_freq, m) * cfg.chirp_interval)
    array = np.exp(2j * np.pi * np.outer(spatial_freq, k))
    return slow_time, fast_time, array


def synthesize_frame(scatterers: Sequence[Scatterer], cfg: RadarConfig,
                     rng_seed: Optional[int] = None) -> np.ndarray:
    """
    Synthesize one frame as a complex cube [n_chirps, n_adc, n_virtual_antennas].

    Circular complex Gaussian noise with total standard deviation
    cfg.noise_std is added from a generator seeded with rng_seed.
    """
    cube = np.zeros((cfg.n_chirps, cfg.n_adc, cfg.n_virtual_antennas), dtype=np.complex128)

    if scatterers:
        for s in scatterers:
            check_unambiguous(s, cfg)
        amplitudes = np.array([s.amplitude for s in scatterers], dtype=np.float64)
        slow_time, fast_time, array = steering_phasors(scatterers, cfg)
        cube += np.einsum('s,sm,sn,sk->mnk', amplitudes, slow_time, fast_time, array, optimize=True)

    if cfg.noise_std > 0:
        rng = np.random.default_rng(rng_seed)
        component_std = cfg.noise_std / np.sqrt(2.0)
        cube += rng.normal(0.0, component_std, cube.shape) + 1j * rng.normal(0.0, component_std, cube.shape)

    return cube.astype(IQ_DTYPE)
