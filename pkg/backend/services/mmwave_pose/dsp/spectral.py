"""
Spectral Processing
IQ cube -> Range-Azimuth-Doppler cube -> RD / RA maps

FFTs use scipy.fft with the unnormalized forward convention, so a range FFT
multiplies total energy by n_adc (Parseval). scipy.fft handles the 255-point
Doppler axis natively (mixed radix / Bluestein); no zero padding is applied
there. The antenna axis is zero-padded to angle_fft_size before its FFT.
"""

import logging

import numpy as np
from scipy import fft as sp_fft

logger = logging.getLogger(__name__)

DEFAULT_ANGLE_FFT_SIZE = 64

CHIRP_AXIS, ADC_AXIS, ANTENNA_AXIS = 0, 1, 2


def range_fft(iq: np.ndarray) -> np.ndarray:
    """FFT over ADC samples of a [chirp, adc, antenna] cube"""
    return sp_fft.fft(iq, axis=ADC_AXIS)


def doppler_fft(spectrum: np.ndarray) -> np.ndarray:
    """FFT over chirps with zero velocity moved to index n_chirps // 2"""
    return sp_fft.fftshift(sp_fft.fft(spectrum, axis=CHIRP_AXIS), axes=CHIRP_AXIS)


def angle_fft(spectrum: np.ndarray, angle_fft_size: int = DEFAULT_ANGLE_FFT_SIZE) -> np.ndarray:
    if angle_fft_size < spectrum.shape[ANTENNA_AXIS]:
        raise ValueError(
            f"angle_fft_size {angle_fft_size} smaller than antenna count {spectrum.shape[ANTENNA_AXIS]}"
        )
    return sp_fft.fftshift(sp_fft.fft(spectrum, n=angle_fft_size, axis=ANTENNA_AXIS), axes=ANTENNA_AXIS)


def iq_to_rad(iq: np.ndarray, angle_fft_size: int = DEFAULT_ANGLE_FFT_SIZE) -> np.ndarray:
    """
    Convert one IQ frame [n_chirps, n_adc, n_antennas] into a RAD magnitude cube.

    Returns:
        float32 array [range_bins = n_adc, doppler_bins = n_chirps, angle_bins]
    """
    if iq.ndim != 3:
        raise ValueError(f"IQ cube must be [chirp, adc, antenna], got shape {iq.shape}")
    spectrum = angle_fft(doppler_fft(range_fft(iq)), angle_fft_size)
    return np.abs(spectrum).transpose(1, 0, 2).astype(np.float32)


def rad_to_rd(rad: np.ndarray) -> np.ndarray:
    """Range-Doppler map: maximum over the azimuth axis"""
    return rad.max(axis=2)


def rad_to_ra(rad: np.ndarray) -> np.ndarray:
    """Range-azimuth map: maximum over the Doppler axis"""
    return rad.max(axis=1)


def frame_maps(iq: np.ndarray, angle_fft_size: int = DEFAULT_ANGLE_FFT_SIZE):
    """Both projections of one frame, (rd, ra)"""
    rad = iq_to_rad(iq, angle_fft_size)
    return rad_to_rd(rad), rad_to_ra(rad)
