"""
Synthetic Test Data
Small random clip samples and configs shared by the test modules
"""

import os
import sys
from typing import Dict, List, Sequence

import numpy as np

sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from dataset.container import RadarSample, clip_id_for  # noqa: E402
from dsp.clip_builder import RadarClip  # noqa: E402
from model.config import ModelConfig  # noqa: E402
from training.train_config import TrainConfig  # noqa: E402

CONFIG_DIR = os.path.abspath(os.path.join(os.path.dirname(__file__), '..', 'configs'))
TINY_CONFIG = os.path.join(CONFIG_DIR, 'tiny.json')

# 8 frames of 16x16 with (2, 8, 8) patches: a 4x2x2 token grid, 2 output frames
TINY_MODEL = {
    'n_frames': 8,
    'height': 16,
    'width': 16,
    'patch': (2, 8, 8),
    'embed_dim': 32,
    'encoder_depth': 2,
    'encoder_heads': 2,
    'recon_decoder_depth': 1,
    'recon_decoder_dim': 32,
    'recon_decoder_heads': 2,
    'mask_ratio': 0.75,
    'heatmap_size': 8,
    'pose_channels': (16, 8, 8),
    'head_hidden': 32,
    'gcn_hidden': 8,
}
TINY_OUT_FRAMES = 2
SCALE = (3.0, 4.0)


def tiny_model_config(**overrides) -> ModelConfig:
    return ModelConfig(**{**TINY_MODEL, **overrides})


def tiny_train_config(stage: str, **overrides) -> TrainConfig:
    values = {'epochs': 2, 'batch_size': 4, 'warmup_epochs': 1, 'early_stop_patience': 2, 'seed': 7}
    values.update(overrides)
    return TrainConfig(stage=stage, **values)


def make_samples(n_persons: int = 3, n_actions: int = 2, clips_per_pair: int = 2,
                 modalities: Sequence[str] = ('rd',), n_frames: int = 8, size: int = 16,
                 n_out: int = TINY_OUT_FRAMES, seed: int = 0, interference: bool = False) -> List[RadarSample]:
    """Random frames in [0, 1] with random joint labels, one sample per (person, action, clip)"""
    rng = np.random.default_rng(seed)
    samples = []
    for person in range(n_persons):
        for action in range(n_actions):
            for clip_index in range(clips_per_pair):
                labels = rng.uniform(0.1, 0.9, size=(n_out, 13, 2)).astype(np.float32)
                clips = {
                    m: RadarClip(
                        frames=rng.uniform(0.0, 1.0, size=(n_frames, size, size)).astype(np.float32),
                        modality=m,
                        labels=labels,
                        metres_per_unit=SCALE,
                        person_id=person,
                        action_id=action,
                        interference=interference,
                    )
                    for m in modalities
                }
                samples.append(RadarSample(
                    clip_id=clip_id_for(person, action, clip_index),
                    person_id=person,
                    action_id=action,
                    labels=labels,
                    metres_per_unit=SCALE,
                    clips=clips,
                    clip_index=clip_index,
                    interference=interference,
                ))
    return samples


def records_of(samples: Sequence[RadarSample]) -> List[Dict]:
    return [{'clip_id': s.clip_id, 'person_id': s.person_id, 'action_id': s.action_id} for s in samples]
