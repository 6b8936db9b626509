"""
Clip Builder
Turns a sequence of RD or RA maps into a normalized spectrogram video clip
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Sequence, Tuple

import numpy as np

from dsp.spectral import DEFAULT_ANGLE_FFT_SIZE, frame_maps

logger = logging.getLogger(__name__)

MODALITIES = ('rd', 'ra')


@dataclass
class DspConfig:
    """Spectrogram video geometry"""
    angle_fft_size: int = DEFAULT_ANGLE_FFT_SIZE
    n_frames: int = 20
    height: int = 224
    width: int = 224

    @property
    def n_target_frames(self) -> int:
        # two temporal halvings: 2-frame patches, then the stride-2 decoder conv
        return (self.n_frames // 2 - 1) // 2 + 1

    def target_frame_indices(self) -> List[int]:
        return target_frame_indices(self.n_frames)

    def validate(self) -> List[str]:
        problems = []
        if self.n_frames < 2 or self.n_frames % 2:
            problems.append("n_frames must be even and >= 2")
        if self.height < 1 or self.width < 1:
            problems.append("clip height and width must be positive")
        if self.angle_fft_size < 1:
            problems.append("angle_fft_size must be positive")
        return problems


def target_frame_indices(n_frames: int) -> List[int]:
    """Input frames supervised by the pose outputs: one per 4-frame temporal unit, offset 1"""
    n_out = (n_frames // 2 - 1) // 2 + 1
    return [4 * j + 1 for j in range(n_out)]


@dataclass
class RadarClip:
    """Normalized spectrogram video of one modality plus pose labels"""
    frames: np.ndarray
    modality: str
    labels: np.ndarray
    metres_per_unit: Tuple[float, float]
    person_id: int
    action_id: int
    degenerate: bool = False
    interference: bool = False
    issues: List[Dict] = field(default_factory=list)

    def __post_init__(self):
        if self.modality not in MODALITIES:
            raise ValueError(f"Unknown modality {self.modality!r}")
        if min(self.metres_per_unit) <= 0:
            raise ValueError(f"metres_per_unit must be positive, got {self.metres_per_unit}")

    @property
    def shape(self) -> Tuple[int, int, int]:
        return self.frames.shape


def resize_matrix(in_size: int, out_size: int) -> np.ndarray:
    """
    Bilinear interpolation weights [out_size, in_size] with half-pixel centres.

    Output pixel o samples source coordinate (o + 0.5) * in/out - 0.5, clamped
    to [0, in - 1], and blends its two neighbouring source pixels linearly.
    """
    src = (np.arange(out_size) + 0.5) * in_size / out_size - 0.5
    src = np.clip(src, 0.0, in_size - 1)
    lower = np.floor(src).astype(int)
    upper = np.minimum(lower + 1, in_size - 1)
    frac = src - lower

    weights = np.zeros((out_size, in_size))
    rows = np.arange(out_size)
    np.add.at(weights, (rows, lower), 1.0 - frac)
    np.add.at(weights, (rows, upper), frac)
    return weights


def bilinear_resize(frames: np.ndarray, height: int, width: int) -> np.ndarray:
    """Resize the last two axes of [T, h, w]"""
    ry = resize_matrix(frames.shape[-2], height)
    rx = resize_matrix(frames.shape[-1], width)
    return np.einsum('oh,thw,pw->top', ry, frames.astype(np.float64), rx, optimize=True)


def to_clip(maps: Sequence[np.ndarray], labels: np.ndarray, metres_per_unit: Tuple[float, float],
            modality: str, person_id: int = 0, action_id: int = 0, interference: bool = False,
            cfg: DspConfig = None) -> RadarClip:
    """
    Build a RadarClip from per-frame maps.

    Args:
        maps: n_frames RD-or-RA images of identical size
        labels: per-frame normalized joints [n_frames, 13, 2]
        metres_per_unit: (sx, sy) scale of the normalized coordinates
        modality: 'rd' or 'ra'

    Returns:
        RadarClip with frames log-compressed, resized and min-max normalized
        over the whole clip. A constant clip yields all-zero frames and a
        degenerate flag.
    """
    cfg = cfg or DspConfig()
    if len(maps) != cfg.n_frames:
        raise ValueError(f"Expected {cfg.n_frames} maps, got {len(maps)}")
    if len({np.shape(m) for m in maps}) != 1:
        raise ValueError("All maps of a clip must share one size")
    labels = np.asarray(labels, dtype=np.float32)
    if labels.shape[0] != cfg.n_frames:
        raise ValueError(f"Expected per-frame labels for {cfg.n_frames} frames, got {labels.shape}")
    if labels.min() < 0.0 or labels.max() > 1.0:
        raise ValueError("Labels must lie in [0, 1]")

    stacked = np.log1p(np.stack(maps).astype(np.float64))
    resized = bilinear_resize(stacked, cfg.height, cfg.width)

    issues = []
    low, high = resized.min(), resized.max()
    degenerate = not high > low
    if degenerate:
        frames = np.zeros_like(resized, dtype=np.float32)
        issues.append({
            'type': 'DEGENERATE_CLIP',
            'severity': 'HIGH',
            'action': 'flag',
            'message': f"{modality} clip for person {person_id} action {action_id} is constant",
        })
        logger.warning(issues[-1]['message'])
    else:
        frames = ((resized - low) / (high - low)).astype(np.float32)

    return RadarClip(
        frames=frames,
        modality=modality,
        labels=labels[target_frame_indices(cfg.n_frames)],
        metres_per_unit=tuple(float(s) for s in metres_per_unit),
        person_id=person_id,
        action_id=action_id,
        degenerate=degenerate,
        interference=interference,
        issues=issues,
    )


def build_clips(iq_clip: np.ndarray, labels: np.ndarray, metres_per_unit: Tuple[float, float],
                modalities: Sequence[str], person_id: int = 0, action_id: int = 0,
                interference: bool = False, cfg: DspConfig = None) -> Dict[str, RadarClip]:
    """Process an IQ clip [T, chirp, adc, antenna] into one RadarClip per requested modality"""
    cfg = cfg or DspConfig()
    rd_maps, ra_maps = [], []
    for frame in iq_clip:
        rd, ra = frame_maps(frame, cfg.angle_fft_size)
        rd_maps.append(rd)
        ra_maps.append(ra)

    by_modality = {'rd': rd_maps, 'ra': ra_maps}
    return {
        modality: to_clip(by_modality[modality], labels, metres_per_unit, modality,
                          person_id, action_id, interference, cfg)
        for modality in modalities
    }
