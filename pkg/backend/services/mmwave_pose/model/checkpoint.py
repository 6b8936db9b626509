"""
Model Checkpoints
Manifest JSON (config + parameter map) with one RVT1 file per parameter
"""

import json
import logging
from dataclasses import asdict
from pathlib import Path
from typing import Dict, Iterable, Optional, Tuple

import numpy as np

from model.config import ModelConfig
from tensor.autograd import DimensionError
from tensor.serialization import TensorFormatError, load_tensor, save_tensor

logger = logging.getLogger(__name__)

CHECKPOINT_VERSION = 1
MANIFEST_NAME = 'checkpoint.json'

# Fields a pretrained front end must share with the model that loads it
ENCODER_FIELDS = ('n_frames', 'height', 'width', 'in_channels', 'patch', 'embed_dim',
                  'encoder_depth', 'encoder_heads', 'mlp_ratio', 'dual_stream', 'input_modality')


class CheckpointError(Exception):
    """Raised when a checkpoint is missing, malformed or incompatible with the model config"""
    pass


def model_config_from_dict(payload: Dict) -> ModelConfig:
    values = dict(payload)
    for key in ('patch', 'pose_channels'):
        if key in values:
            values[key] = tuple(values[key])
    try:
        return ModelConfig(**values)
    except TypeError as e:
        raise CheckpointError(f"Checkpoint model config is not readable: {e}")


def save_checkpoint(model, cfg: ModelConfig, directory, kind: str, meta: Optional[Dict] = None) -> Path:
    """Write every parameter of model plus a manifest; returns the manifest path"""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    files = {}
    for name, param in model.named_parameters():
        relative = f"params/{name}.rvt"
        save_tensor(directory / relative, param.data)
        files[name] = {'file': relative, 'shape': list(param.shape)}

    manifest = {
        'format_version': CHECKPOINT_VERSION,
        'kind': kind,
        'model_config': asdict(cfg),
        'parameters': files,
        'meta': meta or {},
    }
    path = directory / MANIFEST_NAME
    with open(path, 'w') as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
    logger.info(f"Saved {kind} checkpoint ({len(files)} tensors) to {directory}")
    return path


def load_checkpoint(directory) -> Tuple[Dict[str, np.ndarray], ModelConfig, Dict]:
    """Return (state dict, model config, manifest) with every stored shape verified"""
    directory = Path(directory)
    path = directory / MANIFEST_NAME if directory.is_dir() else directory
    if not path.exists():
        raise CheckpointError(f"Checkpoint manifest not found: {path}")
    try:
        with open(path) as f:
            manifest = json.load(f)
    except json.JSONDecodeError as e:
        raise CheckpointError(f"Checkpoint manifest {path} is not valid JSON: {e}")
    if manifest.get('format_version') != CHECKPOINT_VERSION:
        raise CheckpointError(f"Unsupported checkpoint version {manifest.get('format_version')}")

    cfg = model_config_from_dict(manifest['model_config'])
    state = {}
    for name, entry in manifest['parameters'].items():
        try:
            array = load_tensor(path.parent / entry['file'])
        except TensorFormatError as e:
            raise CheckpointError(str(e))
        if list(array.shape) != list(entry['shape']):
            raise CheckpointError(f"{name}: file shape {array.shape} != manifest shape {entry['shape']}")
        state[name] = array
    return state, cfg, manifest


def check_compatible(stored: ModelConfig, current: ModelConfig, fields: Iterable[str] = ENCODER_FIELDS):
    mismatched = [f for f in fields if getattr(stored, f) != getattr(current, f)]
    if mismatched:
        detail = ", ".join(f"{f}: {getattr(stored, f)} vs {getattr(current, f)}" for f in mismatched)
        raise CheckpointError(f"Checkpoint config does not match the model config ({detail})")


def restore_model(model, state: Dict[str, np.ndarray], strict: bool = True):
    try:
        return model.load_state_dict(state, strict=strict)
    except (KeyError, DimensionError) as e:
        raise CheckpointError(str(e))
