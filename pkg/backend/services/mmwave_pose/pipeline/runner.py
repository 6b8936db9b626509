"""
Pipeline Runner
Command-line subcommands wiring simulation, signal processing, training,
evaluation and reporting into reproducible per-run directories

Subcommands: simulate, process, pretrain, finetune, evaluate, report, lopo.
Every run writes resolved_config.json and a JSON-lines log into
<output dir>/<config hash>_seed<seed>/.
"""

import argparse
import json
import logging
from dataclasses import asdict
from multiprocessing import Pool
from pathlib import Path
from typing import Dict, Iterable, Iterator, List, Optional, Sequence, Tuple

from dataset.container import RadarSample, clip_id_for, iter_iq_dataset, read_dataset, write_dataset, write_iq_dataset
from dataset.lopo import LopoSplit, make_lopo_splits
from dsp.clip_builder import MODALITIES, build_clips
from evaluation.reports import (FoldReport, ReportWriter, aggregate_folds, compare_fold_reports,
                                evaluate_fold, load_fold_reports, write_fold_report)
from model.checkpoint import CheckpointError, load_checkpoint, restore_model
from model.config import HEADS
from model.maepose import PoseEstimationModel
from pipeline.errors import EXIT_OK, report_error
from pipeline.experiment_config import MODALITY_CHOICES, ExperimentConfig, load_experiment_config
from pipeline.logging_setup import attach_run_log, detach_run_log
from radar_sim.scene_generator import iter_dataset
from settings import ConfigError, EnvironmentSettings, load_settings
from training.train_config import INITS
from training.trainer import finetune, pretrain

logger = logging.getLogger(__name__)

METRICS_NAME = 'metrics.json'

# process --modality value -> data.modality recorded in the resolved config
PROCESS_MODALITIES = {'rd': 'rd', 'ra': 'ra', 'both': 'dual'}

# Per-command arguments that select inputs and outputs; recorded under invocation.inputs
INVOCATION_INPUTS = {
    'simulate': ('output',),
    'process': ('input', 'output'),
    'pretrain': ('dataset', 'fold'),
    'finetune': ('dataset', 'fold'),
    'evaluate': ('checkpoint', 'dataset', 'fold', 'interference'),
    'report': ('compare', 'reference'),
    'lopo': (),
}


class PipelineArgumentParser(argparse.ArgumentParser):
    """Usage errors become ConfigError so they share the JSON error record and exit code 2"""

    def error(self, message):
        raise ConfigError(f"{self.prog}: {message}")


def build_parser() -> argparse.ArgumentParser:
    common = PipelineArgumentParser(add_help=False)
    common.add_argument('--config', help='JSON experiment config file')
    common.add_argument('--set', action='append', metavar='SECTION.FIELD=VALUE',
                        help='Override one config field (repeatable)')
    common.add_argument('--seed', type=int, help='Root seed for every random stream')
    common.add_argument('--output-dir', help='Directory that holds run directories')
    common.add_argument('--head', choices=HEADS, help='Pose head used for fine-tuning')
    common.add_argument('--init', choices=INITS, help='Fine-tuning initialisation')
    common.add_argument('--epochs', type=int, help='Epoch count for both training stages')
    common.add_argument('--method', help='Method name recorded in fold reports')

    model_input = PipelineArgumentParser(add_help=False)
    model_input.add_argument('--modality', choices=MODALITY_CHOICES, help='Model input modality (rd, ra or dual)')

    parser = PipelineArgumentParser(description='mmWave radar pose estimation pipeline')
    sub = parser.add_subparsers(dest='command', required=True)

    p = sub.add_parser('simulate', parents=[common], help='Simulate an IQ dataset')
    p.add_argument('--interference', action='store_true', help='Add a bystander to every clip')
    p.add_argument('--output', help='Manifest path of the IQ container')

    p = sub.add_parser('process', parents=[common], help='FFT an IQ container into RD/RA clips')
    p.add_argument('--modality', choices=PROCESS_MODALITIES, default='both', help='Streams to write (rd, ra or both)')
    p.add_argument('--input', help='IQ container manifest (defaults to data.iq_dataset)')
    p.add_argument('--output', help='Manifest path of the clip container')

    for name, text in (('pretrain', 'Masked reconstruction pretraining for one fold'),
                       ('finetune', 'Pose fine-tuning for one fold')):
        p = sub.add_parser(name, parents=[common, model_input], help=text)
        p.add_argument('--dataset', help='Clip container manifest (defaults to data.clip_dataset)')
        p.add_argument('--fold', type=int, help='Held-out test person (default: first person)')
        if name == 'finetune':
            p.add_argument('--checkpoint', help='Pretraining checkpoint directory')

    p = sub.add_parser('evaluate', parents=[common, model_input], help='Evaluate a fine-tuned checkpoint on its test person')
    p.add_argument('--checkpoint', required=True, help='Fine-tuning checkpoint directory')
    p.add_argument('--dataset', help='Clip container manifest (defaults to data.clip_dataset)')
    p.add_argument('--fold', type=int, help='Test person (default: the person stored in the checkpoint)')
    p.add_argument('--interference', help='Clip container recorded with interference, for zero-shot evaluation')

    p = sub.add_parser('report', parents=[common], help='Compare fold reports of several methods')
    p.add_argument('--compare', action='append', required=True, metavar='NAME=DIR',
                   help='Method name and a directory containing its fold reports (repeatable)')
    p.add_argument('--reference', help='Method the results table compares against')

    p = sub.add_parser('lopo', parents=[common, model_input], help='Full leave-one-person-out protocol')
    p.add_argument('--folds', type=int, nargs='+', help='Restrict to these test persons')
    p.add_argument('--zero-shot-interference', action='store_true',
                   help='Also evaluate each fold model on interference clips of its test person')
    return parser


def flags_from_args(args: argparse.Namespace) -> Dict:
    """Dedicated CLI flags as a config payload"""
    payload: Dict = {}

    def put(section: Optional[str], key: str, value):
        if value is None:
            return
        if section is None:
            payload[key] = value
        else:
            payload.setdefault(section, {})[key] = value

    put(None, 'seed', args.seed)
    put(None, 'method', args.method)
    if args.command == 'process':
        put('data', 'modality', PROCESS_MODALITIES[args.modality])
    else:
        put('data', 'modality', getattr(args, 'modality', None))
    put('finetune', 'head', args.head)
    put('finetune', 'init', args.init)
    if args.epochs is not None:
        put('pretrain', 'epochs', args.epochs)
        put('finetune', 'epochs', args.epochs)
    if args.command == 'finetune' and args.checkpoint:
        put('finetune', 'checkpoint', args.checkpoint)
        if args.init is None:
            put('finetune', 'init', 'pretrained')
    if args.command == 'lopo':
        if args.folds:
            put('lopo', 'test_persons', sorted(args.folds))
        if args.zero_shot_interference:
            put('lopo', 'zero_shot_interference', True)
    if args.command == 'simulate' and args.interference:
        put('data', 'interference', True)

    inputs = {name: getattr(args, name) for name in INVOCATION_INPUTS[args.command]
              if getattr(args, name) is not None}
    payload['invocation'] = {'command': args.command, 'inputs': inputs}
    return payload


# ---------------------------------------------------------------------------
# Data helpers
# ---------------------------------------------------------------------------

def samples_from_scenes(scenes_with_iq: Iterable, cfg: ExperimentConfig,
                        modalities: Sequence[str]) -> Iterator[RadarSample]:
    """Run the FFT chain on each (scene, IQ clip) pair"""
    degenerate = 0
    for scene, iq in scenes_with_iq:
        clips = build_clips(iq, scene.labels(), scene.metres_per_unit, modalities,
                            scene.person_id, scene.action_id, scene.interference, cfg.dsp)
        degenerate += any(c.degenerate for c in clips.values())
        yield RadarSample(
            clip_id=clip_id_for(scene.person_id, scene.action_id, scene.clip_index),
            person_id=scene.person_id,
            action_id=scene.action_id,
            labels=clips[modalities[0]].labels,
            metres_per_unit=scene.metres_per_unit,
            clips=clips,
            clip_index=scene.clip_index,
            interference=scene.interference,
        )
    if degenerate:
        logger.warning(f"{degenerate} clip(s) had a constant spectrogram and were zero-filled")


def _simulated_samples(cfg: ExperimentConfig, interference: bool,
                       person_ids: Optional[List[int]] = None) -> List[RadarSample]:
    scenes = iter_dataset(cfg.data.n_persons, cfg.data.n_actions, cfg.data.clips_per_pair, interference,
                          cfg.seed, cfg.radar, cfg.scene, person_ids=person_ids)
    return list(samples_from_scenes(scenes, cfg, cfg.model.modalities))


def _clip_samples(cfg: ExperimentConfig, path: Optional[str]) -> List[RadarSample]:
    path = path or cfg.data.clip_dataset
    if path is None:
        raise ConfigError("No clip dataset given (use --dataset or data.clip_dataset)")
    samples = read_dataset(path)
    missing = [m for m in cfg.model.modalities if samples and m not in samples[0].clips]
    if missing:
        raise ConfigError(f"Clip dataset {path} lacks modalities {missing}")
    return samples


def _records(samples: Sequence[RadarSample]) -> List[Dict]:
    return [{'clip_id': s.clip_id, 'person_id': s.person_id, 'action_id': s.action_id} for s in samples]


def _fold_split(cfg: ExperimentConfig, samples: Sequence[RadarSample], fold: Optional[int]) -> LopoSplit:
    splits = make_lopo_splits(_records(samples), cfg.lopo.val_fraction, cfg.seed)
    if fold is None:
        return splits[0]
    for split in splits:
        if split.test_person == fold:
            return split
    raise ConfigError(f"Person {fold} is not in the dataset")


def _fold_dir(run_dir: Path, test_person: int) -> Path:
    return run_dir / f"fold_{test_person:02d}"


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_simulate(cfg: ExperimentConfig, args, run_dir: Path, settings: EnvironmentSettings) -> Dict:
    output = Path(args.output) if args.output else run_dir / 'iq' / 'manifest.json'
    logger.info(f"Simulating {cfg.data.n_persons} persons x {cfg.data.n_actions} actions x "
                f"{cfg.data.clips_per_pair} clips (interference={cfg.data.interference})")
    logger.info(f"Radar: {cfg.radar.summary()}")
    scenes = iter_dataset(cfg.data.n_persons, cfg.data.n_actions, cfg.data.clips_per_pair,
                          cfg.data.interference, cfg.seed, cfg.radar, cfg.scene)
    manifest = write_iq_dataset(scenes, output, cfg.seed, asdict(cfg.radar))
    return {'manifest': str(output), 'clips': len(manifest.records)}


def cmd_process(cfg: ExperimentConfig, args, run_dir: Path, settings: EnvironmentSettings) -> Dict:
    source = args.input or cfg.data.iq_dataset
    if source is None:
        raise ConfigError("No IQ dataset given (use --input or data.iq_dataset)")
    output = Path(args.output) if args.output else run_dir / 'dataset' / 'manifest.json'
    streams = MODALITIES if cfg.data.modality == 'dual' else (cfg.data.modality,)
    logger.info(f"Writing streams: {', '.join(streams)}")

    def scenes() -> Iterator[Tuple]:
        for record, iq, labels in iter_iq_dataset(source):
            if record['T'] != cfg.dsp.n_frames:
                raise ConfigError(f"IQ clip {record['clip_id']} has {record['T']} frames, "
                                  f"dsp.n_frames is {cfg.dsp.n_frames}")
            clips = build_clips(iq, labels, tuple(record['metres_per_unit']), streams,
                                record['person_id'], record['action_id'], record['interference'], cfg.dsp)
            yield RadarSample(
                clip_id=record['clip_id'],
                person_id=record['person_id'],
                action_id=record['action_id'],
                labels=clips[streams[0]].labels,
                metres_per_unit=tuple(record['metres_per_unit']),
                clips=clips,
                clip_index=record.get('clip_index', 0),
                interference=record['interference'],
            )

    samples = list(scenes())
    write_dataset(samples, output, cfg.seed, streams)
    return {'manifest': str(output), 'clips': len(samples),
            'degenerate': sum(s.degenerate for s in samples)}


def cmd_pretrain(cfg: ExperimentConfig, args, run_dir: Path, settings: EnvironmentSettings) -> Dict:
    samples = _clip_samples(cfg, args.dataset)
    split = _fold_split(cfg, samples, args.fold)
    result = pretrain(samples, split, cfg.model, cfg.pretrain, _fold_dir(run_dir, split.test_person))
    return {'test_person': split.test_person, 'checkpoint': str(result.checkpoint.parent),
            **{k: v for k, v in result.log.summary().items() if k != 'best_checkpoint'}}


def cmd_finetune(cfg: ExperimentConfig, args, run_dir: Path, settings: EnvironmentSettings) -> Dict:
    samples = _clip_samples(cfg, args.dataset)
    split = _fold_split(cfg, samples, args.fold)
    result = finetune(samples, split, cfg.model, cfg.finetune, _fold_dir(run_dir, split.test_person))
    return {'test_person': split.test_person, 'checkpoint': str(result.checkpoint.parent),
            **{k: v for k, v in result.log.summary().items() if k != 'best_checkpoint'}}


def load_pose_model(checkpoint) -> Tuple[PoseEstimationModel, Dict]:
    state, stored_cfg, manifest = load_checkpoint(checkpoint)
    if manifest.get('kind') != 'finetune':
        raise CheckpointError(f"{checkpoint} holds a {manifest.get('kind')} checkpoint, expected finetune")
    model = PoseEstimationModel(stored_cfg)
    restore_model(model, state)
    return model, manifest


def cmd_evaluate(cfg: ExperimentConfig, args, run_dir: Path, settings: EnvironmentSettings) -> Dict:
    model, manifest = load_pose_model(args.checkpoint)
    fold = args.fold if args.fold is not None else manifest.get('meta', {}).get('test_person')
    samples = _clip_samples(cfg, args.dataset)
    split = _fold_split(cfg, samples, fold)
    noisy = read_dataset(args.interference) if args.interference else None
    report = evaluate_fold(model, samples, split.test_ids, split.test_person, cfg.method_name,
                           cfg.lopo.eval_batch_size, noisy)
    path = write_fold_report(report, _fold_dir(run_dir, split.test_person))
    return {'fold_report': str(path), **report.to_json(include_clips=False)}


def _parse_compare(items: Sequence[str]) -> Dict[str, str]:
    methods = {}
    for item in items:
        if '=' not in item:
            raise ConfigError(f"--compare expects NAME=DIR, got {item!r}")
        name, directory = item.split('=', 1)
        if name in methods:
            raise ConfigError(f"Method {name} given twice")
        methods[name] = directory
    if len(methods) < 2:
        raise ConfigError("report needs at least two methods")
    return methods


def cmd_report(cfg: ExperimentConfig, args, run_dir: Path, settings: EnvironmentSettings) -> Dict:
    sources = _parse_compare(args.compare)
    method_reports = {name: load_fold_reports(directory) for name, directory in sources.items()}
    stats_report = compare_fold_reports(method_reports)
    paths = ReportWriter(run_dir / 'report').write(stats_report, method_reports, args.reference)
    return {'friedman_p': stats_report.friedman['p'], 'test_family': stats_report.test_family,
            **{k: str(v) for k, v in paths.items()}}


# ---------------------------------------------------------------------------
# Leave-one-person-out protocol
# ---------------------------------------------------------------------------

_WORKER_DATA: Dict[str, Optional[List[RadarSample]]] = {'samples': None, 'interference': None}


def _init_worker(samples: List[RadarSample], interference: Optional[List[RadarSample]]):
    _WORKER_DATA['samples'] = samples
    _WORKER_DATA['interference'] = interference


def run_fold(cfg: ExperimentConfig, split: LopoSplit, fold_dir: Path, samples: Sequence[RadarSample],
             interference: Optional[Sequence[RadarSample]] = None) -> FoldReport:
    """Pretrain (for pretrained init), fine-tune and evaluate one fold"""
    logger.info("=" * 60)
    logger.info(f"Fold {split.test_person}: {cfg.method_name}", extra={'fold': split.test_person})
    logger.info("=" * 60)
    pretrained = None
    if cfg.finetune.init == 'pretrained':
        stage = pretrain(samples, split, cfg.model, cfg.pretrain, fold_dir)
        pretrained = (stage.model.state_dict(), cfg.model)
    result = finetune(samples, split, cfg.model, cfg.finetune, fold_dir, pretrained=pretrained)
    report = evaluate_fold(result.model, samples, split.test_ids, split.test_person, cfg.method_name,
                           cfg.lopo.eval_batch_size, interference)
    write_fold_report(report, fold_dir)
    return report


def _fold_task(task: Tuple[ExperimentConfig, LopoSplit, Path]) -> FoldReport:
    cfg, split, fold_dir = task
    return run_fold(cfg, split, fold_dir, _WORKER_DATA['samples'], _WORKER_DATA['interference'])


def cmd_lopo(cfg: ExperimentConfig, args, run_dir: Path, settings: EnvironmentSettings) -> Dict:
    logger.info(f"Simulating and processing {cfg.data.n_persons * cfg.data.n_actions * cfg.data.clips_per_pair} clips")
    samples = _simulated_samples(cfg, interference=False)
    if cfg.lopo.save_dataset:
        write_dataset(samples, run_dir / 'dataset' / 'manifest.json', cfg.seed, cfg.model.modalities)

    splits = make_lopo_splits(_records(samples), cfg.lopo.val_fraction, cfg.seed)
    wanted = cfg.lopo.test_persons
    splits = [s for s in splits if wanted is None or s.test_person in wanted]
    interference = None
    if cfg.lopo.zero_shot_interference:
        interference = _simulated_samples(cfg, interference=True, person_ids=[s.test_person for s in splits])

    tasks = [(cfg, split, _fold_dir(run_dir, split.test_person)) for split in splits]
    if settings.uses_worker_pool and len(tasks) > 1:
        workers = min(settings.workers, len(tasks))
        logger.info(f"Running {len(tasks)} folds on {workers} worker processes")
        with Pool(workers, initializer=_init_worker, initargs=(samples, interference)) as pool:
            reports = pool.map(_fold_task, tasks)
    else:
        _init_worker(samples, interference)
        reports = [_fold_task(task) for task in tasks]

    metrics = {
        'method': cfg.method_name,
        'config_hash': cfg.config_hash(),
        'seed': cfg.seed,
        'folds': [r.to_json(include_clips=False) for r in reports],
        'aggregate': aggregate_folds(reports),
    }
    path = run_dir / METRICS_NAME
    with open(path, 'w') as f:
        json.dump(metrics, f, indent=2, sort_keys=True)
        f.write('\n')

    aggregate = metrics['aggregate']
    logger.info(f"LOPO {cfg.method_name}: MPJPE {aggregate['mpjpe_m']['mean']:.4f} ± "
                f"{aggregate['mpjpe_m']['std']:.4f} m, PCK@0.05 {100 * aggregate['pck_05']['mean']:.1f}% "
                f"over {aggregate['n_folds']} folds")
    return {'metrics': str(path), 'n_folds': aggregate['n_folds'],
            'mpjpe_m': aggregate['mpjpe_m'], 'pck_05': aggregate['pck_05']}


COMMANDS = {
    'simulate': cmd_simulate,
    'process': cmd_process,
    'pretrain': cmd_pretrain,
    'finetune': cmd_finetune,
    'evaluate': cmd_evaluate,
    'report': cmd_report,
    'lopo': cmd_lopo,
}


def run(argv: Optional[Sequence[str]] = None) -> int:
    """Parse arguments, resolve the config, run one subcommand and return the exit status"""
    try:
        args = build_parser().parse_args(argv)
        settings = load_settings(args.output_dir)
        logging.getLogger().setLevel(settings.log_level)
        cfg = load_experiment_config(args.config, args.set or [], flags_from_args(args))
        run_dir = settings.output_dir / cfg.run_dir_name()
        cfg.write_resolved(run_dir)

        handler = attach_run_log(run_dir)
        try:
            logger.info("=" * 60)
            logger.info(f"{args.command.upper()} | run {run_dir.name} | method {cfg.method_name}")
            logger.info("=" * 60)
            result = COMMANDS[args.command](cfg, args, run_dir, settings)
            logger.info("=" * 60)
            logger.info(f"{args.command.upper()} COMPLETE")
            for key, value in result.items():
                logger.info(f"{key}: {value}")
            logger.info("=" * 60)
        finally:
            detach_run_log(handler)

        print(json.dumps({'status': 'ok', 'command': args.command, 'run_dir': str(run_dir)}, sort_keys=True))
        return EXIT_OK
    except Exception as e:
        return report_error(e)
