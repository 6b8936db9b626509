"""
Radar Configuration
FMCW chirp parameters and the resolutions derived from them
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List

from scipy.constants import c as SPEED_OF_LIGHT

logger = logging.getLogger(__name__)

DEFAULT_START_FREQ = 77e9
DEFAULT_WAVELENGTH = SPEED_OF_LIGHT / DEFAULT_START_FREQ


@dataclass
class RadarConfig:
    """Chirp, sampling and array parameters of the simulated sensor"""
    start_freq: float = DEFAULT_START_FREQ
    slope: float = 65.998e12
    adc_rate: float = 4.8e6
    n_adc: int = 256
    n_chirps: int = 255
    chirp_interval: float = 160.2e-6
    n_virtual_antennas: int = 8
    antenna_spacing: float = field(default=DEFAULT_WAVELENGTH / 2)
    frame_rate: float = 10.0
    noise_std: float = 1.0

    @property
    def wavelength(self) -> float:
        return SPEED_OF_LIGHT / self.start_freq

    @property
    def chirp_duration(self) -> float:
        """ADC sampling window of one chirp"""
        return self.n_adc / self.adc_rate

    @property
    def range_resolution(self) -> float:
        return SPEED_OF_LIGHT / (2 * self.slope * self.chirp_duration)

    @property
    def doppler_resolution(self) -> float:
        return self.wavelength / (2 * self.n_chirps * self.chirp_interval)

    @property
    def max_range(self) -> float:
        return self.n_adc * self.range_resolution

    @property
    def max_velocity(self) -> float:
        return self.n_chirps / 2 * self.doppler_resolution

    @property
    def doppler_zero_bin(self) -> int:
        """Index of zero velocity after fftshift"""
        return self.n_chirps // 2

    def range_bin(self, range_m: float) -> float:
        return range_m / self.range_resolution

    def doppler_bin(self, velocity: float) -> float:
        return self.doppler_zero_bin + velocity / self.doppler_resolution

    def angle_bin(self, azimuth: float, angle_fft_size: int = 64) -> float:
        return angle_fft_size / 2 + angle_fft_size * (self.antenna_spacing / self.wavelength) * math.sin(azimuth)

    def validate(self) -> List[str]:
        """Return a list of violated constraints (empty when valid)"""
        problems = []
        for name in ('start_freq', 'slope', 'adc_rate', 'chirp_interval', 'antenna_spacing', 'frame_rate'):
            if getattr(self, name) <= 0:
                problems.append(f"{name} must be positive")
        for name in ('n_adc', 'n_chirps', 'n_virtual_antennas'):
            if getattr(self, name) < 1:
                problems.append(f"{name} must be >= 1")
        if self.noise_std < 0:
            problems.append("noise_std must be non-negative")
        if self.frame_rate > 0 and self.n_chirps * self.chirp_interval > 1.0 / self.frame_rate:
            problems.append("n_chirps * chirp_interval exceeds the frame period")
        return problems

    def summary(self) -> Dict[str, float]:
        return {
            'range_resolution_m': self.range_resolution,
            'doppler_resolution_mps': self.doppler_resolution,
            'max_range_m': self.max_range,
            'max_velocity_mps': self.max_velocity,
        }
