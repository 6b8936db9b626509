"""
Dataset Container
JSON manifest plus one RVT1 tensor file per clip stream

Two container kinds share the manifest layout:
  - "clips": processed RadarClip frames per modality plus target-frame labels
  - "iq":    raw IQ clips [T, chirps, adc, antennas, 2] plus per-frame labels
"""

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np
from jsonschema import ValidationError, validate

from dsp.clip_builder import MODALITIES, RadarClip
from tensor.serialization import TensorFormatError, load_tensor, read_header, save_tensor

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1
MANIFEST_NAME = 'manifest.json'
CLIP_DIR = 'clips'

MANIFEST_SCHEMA = {
    "type": "object",
    "required": ["format_version", "kind", "modalities", "seed", "clips"],
    "properties": {
        "format_version": {"const": FORMAT_VERSION},
        "kind": {"enum": ["clips", "iq"]},
        "modalities": {"type": "array", "items": {"enum": list(MODALITIES) + ["iq"]}, "minItems": 1},
        "seed": {"type": "integer", "minimum": 0},
        "radar": {"type": "object"},
        "clips": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["clip_id", "person_id", "action_id", "files", "T", "H", "W",
                             "metres_per_unit", "degenerate", "interference"],
                "properties": {
                    "clip_id": {"type": "string"},
                    "person_id": {"type": "integer", "minimum": 0},
                    "action_id": {"type": "integer", "minimum": 0},
                    "clip_index": {"type": "integer", "minimum": 0},
                    "files": {"type": "object", "additionalProperties": {"type": "string"}},
                    "T": {"type": "integer", "minimum": 1},
                    "H": {"type": "integer", "minimum": 1},
                    "W": {"type": "integer", "minimum": 1},
                    "metres_per_unit": {
                        "type": "array", "items": {"type": "number", "exclusiveMinimum": 0},
                        "minItems": 2, "maxItems": 2,
                    },
                    "degenerate": {"type": "object", "additionalProperties": {"type": "boolean"}},
                    "interference": {"type": "boolean"},
                },
            },
        },
    },
}


class CorruptContainerError(Exception):
    """Raised when a dataset container is missing files or its contents disagree with the manifest"""
    pass


@dataclass
class RadarSample:
    """All modality clips of one recording plus shared metadata"""
    clip_id: str
    person_id: int
    action_id: int
    labels: np.ndarray
    metres_per_unit: Tuple[float, float]
    clips: Dict[str, RadarClip]
    clip_index: int = 0
    interference: bool = False

    def frames(self, modality: str) -> np.ndarray:
        return self.clips[modality].frames

    @property
    def degenerate(self) -> bool:
        return any(clip.degenerate for clip in self.clips.values())


@dataclass
class DatasetManifest:
    """Parsed manifest; paths in records are relative to root"""
    root: Path
    kind: str
    modalities: List[str]
    seed: int
    records: List[Dict]
    format_version: int = FORMAT_VERSION
    radar: Dict = field(default_factory=dict)

    @property
    def person_ids(self) -> List[int]:
        return sorted({r['person_id'] for r in self.records})

    @property
    def action_ids(self) -> List[int]:
        return sorted({r['action_id'] for r in self.records})

    def record(self, clip_id: str) -> Dict:
        for r in self.records:
            if r['clip_id'] == clip_id:
                return r
        raise KeyError(clip_id)

    def path(self, relative: str) -> Path:
        return self.root / relative

    def to_json(self) -> Dict:
        payload = {
            'format_version': self.format_version,
            'kind': self.kind,
            'modalities': list(self.modalities),
            'seed': int(self.seed),
            'clips': self.records,
        }
        if self.radar:
            payload['radar'] = self.radar
        return payload


def clip_id_for(person_id: int, action_id: int, clip_index: int) -> str:
    return f"p{person_id:02d}_a{action_id:02d}_c{clip_index:02d}"


def _manifest_path(path) -> Path:
    path = Path(path)
    return path / MANIFEST_NAME if path.is_dir() or path.suffix != '.json' else path


def _check_dense(ids: Sequence[int], what: str):
    unique = sorted(set(ids))
    if unique != list(range(len(unique))):
        raise CorruptContainerError(f"{what} ids are not dense from 0: {unique}")


def _write_manifest(manifest: DatasetManifest, manifest_path: Path):
    validate(instance=manifest.to_json(), schema=MANIFEST_SCHEMA)
    manifest_path.parent.mkdir(parents=True, exist_ok=True)
    with open(manifest_path, 'w') as f:
        json.dump(manifest.to_json(), f, indent=2)
    logger.info(f"Wrote manifest with {len(manifest.records)} clips to {manifest_path}")


def write_dataset(samples: Sequence[RadarSample], manifest_path, seed: int = 42,
                  modalities: Optional[Sequence[str]] = None) -> DatasetManifest:
    """Write processed samples as a clips container and return its manifest"""
    manifest_path = _manifest_path(manifest_path)
    root = manifest_path.parent
    modalities = list(modalities or (sorted(samples[0].clips) if samples else ['rd']))

    records = []
    for sample in samples:
        files = {}
        for modality in modalities:
            if modality not in sample.clips:
                raise CorruptContainerError(f"Sample {sample.clip_id} lacks modality {modality}")
            files[modality] = f"{CLIP_DIR}/{sample.clip_id}_{modality}.rvt"
            save_tensor(root / files[modality], sample.clips[modality].frames)
        files['labels'] = f"{CLIP_DIR}/{sample.clip_id}_labels.rvt"
        save_tensor(root / files['labels'], sample.labels)

        t, h, w = sample.clips[modalities[0]].frames.shape
        records.append({
            'clip_id': sample.clip_id,
            'person_id': int(sample.person_id),
            'action_id': int(sample.action_id),
            'clip_index': int(sample.clip_index),
            'files': files,
            'T': int(t), 'H': int(h), 'W': int(w),
            'metres_per_unit': [float(s) for s in sample.metres_per_unit],
            'degenerate': {m: bool(sample.clips[m].degenerate) for m in modalities},
            'interference': bool(sample.interference),
        })

    manifest = DatasetManifest(root=root, kind='clips', modalities=modalities, seed=seed, records=records)
    _write_manifest(manifest, manifest_path)
    return manifest


def read_manifest(manifest_path, verify_files: bool = True) -> DatasetManifest:
    manifest_path = _manifest_path(manifest_path)
    if not manifest_path.exists():
        raise CorruptContainerError(f"Manifest not found: {manifest_path}")
    try:
        with open(manifest_path) as f:
            payload = json.load(f)
        validate(instance=payload, schema=MANIFEST_SCHEMA)
    except (json.JSONDecodeError, ValidationError) as e:
        raise CorruptContainerError(f"Invalid manifest {manifest_path}: {getattr(e, 'message', e)}")

    manifest = DatasetManifest(
        root=manifest_path.parent,
        kind=payload['kind'],
        modalities=payload['modalities'],
        seed=payload['seed'],
        records=payload['clips'],
        format_version=payload['format_version'],
        radar=payload.get('radar', {}),
    )
    if manifest.records:
        _check_dense([r['person_id'] for r in manifest.records], 'person')
        _check_dense([r['action_id'] for r in manifest.records], 'action')
    if verify_files:
        verify_manifest(manifest)
    return manifest


def _expected_shape(manifest: DatasetManifest, record: Dict, stream: str) -> Optional[Tuple[int, ...]]:
    if manifest.kind == 'clips' and stream in MODALITIES:
        return (record['T'], record['H'], record['W'])
    if manifest.kind == 'iq' and stream == 'iq':
        radar = manifest.radar
        return (record['T'], radar['n_chirps'], radar['n_adc'], radar['n_virtual_antennas'], 2)
    return None


def verify_manifest(manifest: DatasetManifest):
    """Check that every referenced file exists and its header matches the record"""
    for record in manifest.records:
        for stream, relative in record['files'].items():
            path = manifest.path(relative)
            if not path.exists():
                raise CorruptContainerError(f"Clip {record['clip_id']}: missing file {relative}")
            try:
                shape = read_header(path)
            except TensorFormatError as e:
                raise CorruptContainerError(str(e))
            expected = _expected_shape(manifest, record, stream)
            if expected is not None and tuple(shape) != expected:
                raise CorruptContainerError(
                    f"Clip {record['clip_id']}: {stream} header {shape} does not match manifest {expected}"
                )


def _load(manifest: DatasetManifest, relative: str) -> np.ndarray:
    try:
        return load_tensor(manifest.path(relative))
    except TensorFormatError as e:
        raise CorruptContainerError(str(e))


def load_sample(manifest: DatasetManifest, record: Dict) -> RadarSample:
    labels = _load(manifest, record['files']['labels'])
    metres = tuple(record['metres_per_unit'])
    clips = {}
    for modality in manifest.modalities:
        frames = _load(manifest, record['files'][modality])
        if frames.shape != (record['T'], record['H'], record['W']):
            raise CorruptContainerError(f"Clip {record['clip_id']}: {modality} frames have shape {frames.shape}")
        clips[modality] = RadarClip(
            frames=frames,
            modality=modality,
            labels=labels,
            metres_per_unit=metres,
            person_id=record['person_id'],
            action_id=record['action_id'],
            degenerate=record['degenerate'].get(modality, False),
            interference=record['interference'],
        )
    return RadarSample(
        clip_id=record['clip_id'],
        person_id=record['person_id'],
        action_id=record['action_id'],
        labels=labels,
        metres_per_unit=metres,
        clips=clips,
        clip_index=record.get('clip_index', 0),
        interference=record['interference'],
    )


def read_dataset(manifest_path) -> List[RadarSample]:
    manifest = read_manifest(manifest_path)
    if manifest.kind != 'clips':
        raise CorruptContainerError(f"{manifest_path} holds a {manifest.kind} container, expected clips")
    samples = [load_sample(manifest, record) for record in manifest.records]
    logger.info(f"Read {len(samples)} clips ({', '.join(manifest.modalities)}) from {manifest.root}")
    return samples


# ---------------------------------------------------------------------------
# Raw IQ containers
# ---------------------------------------------------------------------------

def write_iq_dataset(scenes_with_iq: Iterator, manifest_path, seed: int, radar: Dict) -> DatasetManifest:
    """
    Stream (FigureScene, IQ clip) pairs to disk.

    The IQ tensor stores real and imaginary parts in a trailing axis of size 2;
    labels are the per-frame normalized joints [T, 13, 2].
    """
    manifest_path = _manifest_path(manifest_path)
    root = manifest_path.parent
    records = []
    for scene, iq in scenes_with_iq:
        clip_id = clip_id_for(scene.person_id, scene.action_id, scene.clip_index)
        files = {
            'iq': f"{CLIP_DIR}/{clip_id}_iq.rvt",
            'labels': f"{CLIP_DIR}/{clip_id}_labels.rvt",
        }
        save_tensor(root / files['iq'], np.stack([iq.real, iq.imag], axis=-1))
        save_tensor(root / files['labels'], scene.labels())
        records.append({
            'clip_id': clip_id,
            'person_id': int(scene.person_id),
            'action_id': int(scene.action_id),
            'clip_index': int(scene.clip_index),
            'files': files,
            'T': int(iq.shape[0]), 'H': int(iq.shape[1]), 'W': int(iq.shape[2]),
            'metres_per_unit': [float(s) for s in scene.metres_per_unit],
            'degenerate': {},
            'interference': bool(scene.interference),
        })
    manifest = DatasetManifest(root=root, kind='iq', modalities=['iq'], seed=seed,
                               records=records, radar=dict(radar))
    _write_manifest(manifest, manifest_path)
    return manifest


def iter_iq_dataset(manifest_path) -> Iterator[Tuple[Dict, np.ndarray, np.ndarray]]:
    """Yield (record, complex IQ clip, per-frame labels) from an IQ container"""
    manifest = read_manifest(manifest_path)
    if manifest.kind != 'iq':
        raise CorruptContainerError(f"{manifest_path} holds a {manifest.kind} container, expected iq")
    for record in manifest.records:
        raw = _load(manifest, record['files']['iq'])
        labels = _load(manifest, record['files']['labels'])
        yield record, (raw[..., 0] + 1j * raw[..., 1]).astype(np.complex64), labels
