"""
Experiment Configuration
One resolved config per run: per-concern dataclasses, JSON file loading with
schema validation, CLI overrides and the config-hash run directory name

Precedence: built-in defaults < JSON config file < CLI flags.
"""

import hashlib
import json
import logging
import typing
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

from jsonschema import ValidationError, validate

from dsp.clip_builder import DspConfig
from model.config import ModelConfig
from radar_sim.radar_config import RadarConfig
from radar_sim.scene_generator import SceneConfig
from settings import ConfigError
from training.train_config import TrainConfig

logger = logging.getLogger(__name__)

MODALITY_CHOICES = ('rd', 'ra', 'dual')
COMMANDS = ('simulate', 'process', 'pretrain', 'finetune', 'evaluate', 'report', 'lopo')
RESOLVED_CONFIG_NAME = 'resolved_config.json'


@dataclass
class DataConfig:
    """Synthetic dataset size, modality selection and container locations"""
    n_persons: int = 9
    n_actions: int = 12
    clips_per_pair: int = 2
    modality: str = 'rd'
    interference: bool = False
    iq_dataset: Optional[str] = None
    clip_dataset: Optional[str] = None

    def validate(self) -> List[str]:
        problems = []
        if self.n_persons < 2:
            problems.append("n_persons must be >= 2 for leave-one-person-out")
        if self.n_actions < 1 or self.clips_per_pair < 1:
            problems.append("n_actions and clips_per_pair must be >= 1")
        if self.modality not in MODALITY_CHOICES:
            problems.append(f"modality must be one of {MODALITY_CHOICES}")
        return problems


@dataclass
class InvocationConfig:
    """Subcommand and its per-run inputs (paths, fold, compared methods); part of the config hash"""
    command: Optional[str] = None
    inputs: Dict[str, Any] = field(default_factory=dict)

    def validate(self) -> List[str]:
        if self.command is not None and self.command not in COMMANDS:
            return [f"command must be one of {COMMANDS}"]
        return []


@dataclass
class LopoConfig:
    val_fraction: float = 0.1
    test_persons: Optional[List[int]] = None
    zero_shot_interference: bool = False
    save_dataset: bool = True
    eval_batch_size: int = 8

    def validate(self) -> List[str]:
        problems = []
        if not 0.0 < self.val_fraction < 1.0:
            problems.append("val_fraction must lie in (0, 1)")
        if self.eval_batch_size < 1:
            problems.append("eval_batch_size must be >= 1")
        return problems


@dataclass
class ExperimentConfig:
    seed: int = 42
    method: Optional[str] = None
    data: DataConfig = field(default_factory=DataConfig)
    radar: RadarConfig = field(default_factory=RadarConfig)
    scene: SceneConfig = field(default_factory=SceneConfig)
    dsp: DspConfig = field(default_factory=DspConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    pretrain: TrainConfig = field(default_factory=lambda: TrainConfig(stage='pretrain'))
    finetune: TrainConfig = field(default_factory=lambda: TrainConfig(stage='finetune'))
    lopo: LopoConfig = field(default_factory=LopoConfig)
    invocation: InvocationConfig = field(default_factory=InvocationConfig)

    @property
    def method_name(self) -> str:
        return self.method or f"{self.data.modality}-{self.finetune.head}-{self.finetune.init}"

    def to_dict(self) -> Dict:
        return asdict(self)

    def config_hash(self) -> str:
        canonical = json.dumps(self.to_dict(), sort_keys=True, separators=(',', ':'))
        return hashlib.sha256(canonical.encode('utf-8')).hexdigest()[:12]

    def run_dir_name(self) -> str:
        return f"{self.config_hash()}_seed{self.seed}"

    def write_resolved(self, run_dir) -> Path:
        path = Path(run_dir) / RESOLVED_CONFIG_NAME
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, 'w') as f:
            json.dump(self.to_dict(), f, indent=2, sort_keys=True)
        return path


SECTIONS = ('data', 'radar', 'scene', 'dsp', 'model', 'pretrain', 'finetune', 'lopo', 'invocation')


# ---------------------------------------------------------------------------
# Schema derived from the dataclass fields
# ---------------------------------------------------------------------------

def _json_type(annotation) -> Dict:
    origin = typing.get_origin(annotation)
    args = typing.get_args(annotation)
    if origin is typing.Union and type(None) in args:
        inner = _json_type(next(a for a in args if a is not type(None)))
        kinds = inner['type'] if isinstance(inner['type'], list) else [inner['type']]
        return {**inner, 'type': kinds + ['null']}
    if origin is dict or annotation is dict:
        return {'type': 'object'}
    if origin in (tuple, list) or annotation in (tuple, list):
        return {'type': 'array'}
    if annotation is bool:
        return {'type': 'boolean'}
    if annotation is int:
        return {'type': 'integer'}
    if annotation is float:
        return {'type': 'number'}
    if annotation is str:
        return {'type': 'string'}
    return {}


def _section_schema(cls) -> Dict:
    hints = typing.get_type_hints(cls)
    return {
        'type': 'object',
        'properties': {f.name: _json_type(hints[f.name]) for f in fields(cls)},
        'additionalProperties': False,
    }


def experiment_schema() -> Dict:
    hints = typing.get_type_hints(ExperimentConfig)
    properties = {'seed': {'type': 'integer', 'minimum': 0}, 'method': {'type': ['string', 'null']}}
    for name in SECTIONS:
        properties[name] = _section_schema(hints[name])
    properties['data']['properties']['modality'] = {'enum': list(MODALITY_CHOICES)}
    return {
        '$schema': 'http://json-schema.org/draft-07/schema#',
        'title': 'mmWave pose experiment config',
        'type': 'object',
        'properties': properties,
        'additionalProperties': False,
    }


# ---------------------------------------------------------------------------
# Loading, overrides and consistency
# ---------------------------------------------------------------------------

def _coerce(section, name: str, value: Any) -> Any:
    """JSON arrays become tuples for Tuple-typed fields"""
    hint = typing.get_type_hints(type(section))[name]
    args = [hint] + list(typing.get_args(hint))
    if isinstance(value, list) and any(a is tuple or typing.get_origin(a) is tuple for a in args):
        return tuple(value)
    return value


def _apply_section(section, values: Dict):
    known = {f.name for f in fields(section)}
    unknown = sorted(set(values) - known)
    if unknown:
        raise ConfigError(f"Unknown {type(section).__name__} field(s): {unknown}")
    return replace(section, **{k: _coerce(section, k, v) for k, v in values.items()})


def merge(cfg: ExperimentConfig, payload: Dict) -> ExperimentConfig:
    try:
        validate(instance=payload, schema=experiment_schema())
    except ValidationError as e:
        location = '.'.join(str(p) for p in e.absolute_path) or '<root>'
        raise ConfigError(f"Config invalid at {location}: {e.message}")

    updates = {}
    for key, value in payload.items():
        if key in SECTIONS:
            updates[key] = _apply_section(getattr(cfg, key), value)
        else:
            updates[key] = value
    return replace(cfg, **updates)


def _parse_value(raw: str) -> Any:
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw


def parse_overrides(overrides: Sequence[str]) -> Dict:
    """['model.embed_dim=64', 'seed=7'] -> nested dict"""
    payload: Dict[str, Any] = {}
    for item in overrides:
        if '=' not in item:
            raise ConfigError(f"Override {item!r} must look like section.field=value")
        key, raw = item.split('=', 1)
        parts = key.strip().split('.')
        if len(parts) == 1:
            payload[parts[0]] = _parse_value(raw)
        elif len(parts) == 2:
            payload.setdefault(parts[0], {})[parts[1]] = _parse_value(raw)
        else:
            raise ConfigError(f"Override key {key!r} nests deeper than section.field")
    return payload


def synchronize(cfg: ExperimentConfig) -> ExperimentConfig:
    """Derive the fields that must agree across stages from their single source"""
    modality = cfg.data.modality
    model = replace(
        cfg.model,
        dual_stream=modality == 'dual',
        input_modality=cfg.model.input_modality if modality == 'dual' else modality,
        head=cfg.finetune.head,
    )
    return replace(
        cfg,
        model=model,
        pretrain=replace(cfg.pretrain, seed=cfg.seed, stage='pretrain'),
        finetune=replace(cfg.finetune, seed=cfg.seed, stage='finetune'),
    )


def check(cfg: ExperimentConfig) -> ExperimentConfig:
    problems = []
    for name in SECTIONS:
        problems.extend(f"{name}: {p}" for p in getattr(cfg, name).validate())
    if not cfg.scene.n_frames == cfg.dsp.n_frames == cfg.model.n_frames:
        problems.append("scene.n_frames, dsp.n_frames and model.n_frames must agree")
    if (cfg.dsp.height, cfg.dsp.width) != (cfg.model.height, cfg.model.width):
        problems.append("dsp and model clip height/width must agree")
    if cfg.lopo.test_persons is not None:
        outside = [p for p in cfg.lopo.test_persons if not 0 <= p < cfg.data.n_persons]
        if outside:
            problems.append(f"lopo.test_persons {outside} outside 0..{cfg.data.n_persons - 1}")
    if cfg.data.interference and cfg.invocation.command not in (None, 'simulate'):
        problems.append("data.interference only applies to simulate; use lopo.zero_shot_interference "
                        "or evaluate --interference")
    if problems:
        raise ConfigError("Invalid experiment config: " + "; ".join(problems))
    return cfg


def load_experiment_config(path=None, overrides: Sequence[str] = (), flags: Optional[Dict] = None) -> ExperimentConfig:
    """
    Resolve an ExperimentConfig.

    Args:
        path: optional JSON config file
        overrides: generic 'section.field=value' strings
        flags: dedicated CLI flags already shaped as a nested payload; applied last
    """
    cfg = ExperimentConfig()
    if path is not None:
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"Config file not found: {path}")
        try:
            with open(path) as f:
                payload = json.load(f)
        except json.JSONDecodeError as e:
            raise ConfigError(f"Config file {path} is not valid JSON: {e}")
        cfg = merge(cfg, payload)
        logger.info(f"Loaded config file {path}")
    if overrides:
        cfg = merge(cfg, parse_overrides(overrides))
    if flags:
        cfg = merge(cfg, flags)
    return check(synchronize(cfg))


def config_from_dict(payload: Dict) -> ExperimentConfig:
    """Rebuild a config from resolved_config.json contents"""
    return check(synchronize(merge(ExperimentConfig(), payload)))

