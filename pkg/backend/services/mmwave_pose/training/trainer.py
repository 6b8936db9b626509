"""
Training Orchestration
Self-supervised masked reconstruction pretraining and supervised pose
fine-tuning for one LOPO fold, with early stopping on a validation metric
"""

import json
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from dataset.batching import Batch, ClipLoader
from dataset.container import RadarSample
from dataset.lopo import LopoSplit
from evaluation.metrics import joint_errors
from evaluation.reports import predict_clips
from model.checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from model.config import ModelConfig
from model.maepose import MAEPretrainModel, PoseEstimationModel
from model.masking import MaskBatch, sample_batch_masks
from model.reconstruction import reconstruct_clip
from seeding import derive_seed
from settings import ConfigError
from tensor.autograd import Tensor, no_grad
from tensor.serialization import save_tensor
from training.optimizer import AdamW, build_param_groups, cosine_lr
from training.train_config import TrainConfig

logger = logging.getLogger(__name__)


class NumericFailureError(Exception):
    """Raised when a training loss becomes NaN or infinite"""
    pass


@dataclass
class TrainLog:
    """Per-epoch history of one training stage; epoch 0 is the untrained evaluation"""
    stage: str
    test_person: Optional[int]
    metric_name: str
    epochs: List[Dict] = field(default_factory=list)
    stop_epoch: int = 0
    best_epoch: int = 0
    best_metric: Optional[float] = None
    best_checkpoint: Optional[str] = None

    def record(self, epoch: int, train_loss: Optional[float], metrics: Dict[str, float], lrs: Dict[str, float]):
        entry = {'epoch': epoch, 'train_loss': train_loss}
        entry.update(metrics)
        entry['lr'] = lrs
        self.epochs.append(entry)

    def metric_history(self) -> List[float]:
        return [e[self.metric_name] for e in self.epochs]

    def summary(self) -> Dict:
        return {
            'stage': self.stage,
            'test_person': self.test_person,
            'metric': self.metric_name,
            'stop_epoch': self.stop_epoch,
            'best_epoch': self.best_epoch,
            'best_metric': self.best_metric,
            'best_checkpoint': self.best_checkpoint,
        }

    def write_jsonl(self, path) -> Path:
        """One JSON object per epoch followed by a summary line"""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, 'w') as f:
            for entry in self.epochs:
                f.write(json.dumps({'type': 'epoch', **entry}, sort_keys=True) + '\n')
            f.write(json.dumps({'type': 'summary', **self.summary()}, sort_keys=True) + '\n')
        return path


@dataclass
class StageResult:
    model: object
    log: TrainLog
    checkpoint: Optional[Path] = None


def _checked(train_cfg: TrainConfig, stage: str) -> TrainConfig:
    if train_cfg.stage != stage:
        raise ConfigError(f"{stage} was given a TrainConfig for stage {train_cfg.stage!r}")
    problems = train_cfg.validate()
    if problems:
        raise ConfigError(f"Invalid {stage} config: " + "; ".join(problems))
    return train_cfg


def _val_ids(split: LopoSplit) -> List[str]:
    if split.val_ids:
        return split.val_ids
    logger.warning(f"Fold {split.test_person}: empty validation split, validating on the training clips")
    return split.train_ids


def _write_snapshot(run_dir: Optional[Path], model, stage: str, epoch: int, step: int,
                    loss: float, lr: float, batch: Batch) -> Optional[Path]:
    snapshot = {
        'stage': stage,
        'epoch': epoch,
        'step': step,
        'loss': repr(loss),
        'lr': lr,
        'clip_ids': list(batch.clip_ids),
        'parameters': {
            name: {
                'finite': bool(np.all(np.isfinite(p.data))),
                'max_abs': repr(float(np.nanmax(np.abs(p.data)))) if p.size else '0.0',
            }
            for name, p in model.named_parameters()
        },
    }
    if run_dir is None:
        return None
    path = Path(run_dir) / f"{stage}_numeric_failure.json"
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w') as f:
        json.dump(snapshot, f, indent=2, sort_keys=True)
    return path


def _fit(model, stage: str, train_cfg: TrainConfig, n_blocks: int, loader: ClipLoader,
         step_loss: Callable[[Batch, int], Tensor], evaluate: Callable[[], Dict[str, float]],
         log: TrainLog, run_dir: Optional[Path]) -> TrainLog:
    """
    Run the optimisation loop and leave the model holding the weights of the
    epoch with the lowest validation metric.
    """
    groups = build_param_groups(model.named_parameters(), train_cfg.weight_decay,
                                train_cfg.effective_layerwise_decay, n_blocks)
    optimizer = AdamW(groups, betas=train_cfg.adam_betas, eps=train_cfg.eps)
    steps_per_epoch = len(loader)
    total_steps = train_cfg.epochs * steps_per_epoch
    warmup_steps = train_cfg.warmup_epochs * steps_per_epoch
    base_lr = train_cfg.lr

    metrics = evaluate()
    log.record(0, None, metrics, optimizer.group_lrs(cosine_lr(0, total_steps, warmup_steps, base_lr, train_cfg.min_lr)))
    best_metric = metrics[log.metric_name]
    best_state = model.state_dict()
    best_epoch, stale, step, epoch = 0, 0, 0, 0
    logger.info(f"[{stage}] epoch 0: {log.metric_name}={best_metric:.6f}",
                extra={'stage': stage, 'epoch': 0, 'fold': log.test_person, log.metric_name: best_metric})

    for epoch in range(1, train_cfg.epochs + 1):
        losses = []
        lr = base_lr
        for batch in loader.epoch(epoch):
            lr = cosine_lr(step, total_steps, warmup_steps, base_lr, train_cfg.min_lr)
            loss = step_loss(batch, epoch)
            value = loss.item()
            if not math.isfinite(value):
                path = _write_snapshot(run_dir, model, stage, epoch, step, value, lr, batch)
                raise NumericFailureError(
                    f"{stage} loss became {value} at epoch {epoch}, step {step}"
                    + (f" (snapshot: {path})" if path else "")
                )
            loss.backward()
            optimizer.step(lr)
            optimizer.zero_grad()
            losses.append(value)
            step += 1

        metrics = evaluate()
        train_loss = float(np.mean(losses)) if losses else None
        log.record(epoch, train_loss, metrics, optimizer.group_lrs(lr))
        current = metrics[log.metric_name]
        if current < best_metric:
            best_metric, best_epoch, stale = current, epoch, 0
            best_state = model.state_dict()
        else:
            stale += 1

        logger.info(
            f"[{stage}] epoch {epoch}/{train_cfg.epochs}: train_loss={train_loss:.6f} "
            f"{log.metric_name}={current:.6f} (best {best_metric:.6f} @ {best_epoch})",
            extra={'stage': stage, 'epoch': epoch, 'fold': log.test_person,
                   'loss': train_loss, log.metric_name: current},
        )
        if stale >= train_cfg.early_stop_patience:
            logger.info(f"[{stage}] early stop after {stale} epochs without improvement")
            break

    model.load_state_dict(best_state)
    log.stop_epoch = epoch
    log.best_epoch = best_epoch
    log.best_metric = float(best_metric)
    return log


def _mask_seeds(root: int, prefix: str, clip_ids: Sequence[str], *indices: int) -> List[int]:
    return [derive_seed(root, f"{prefix}:{cid}", *indices) for cid in clip_ids]


# ---------------------------------------------------------------------------
# Stage 1: masked reconstruction pretraining
# ---------------------------------------------------------------------------

def pretrain(samples: Sequence[RadarSample], split: LopoSplit, model_cfg: ModelConfig,
             train_cfg: TrainConfig, run_dir=None) -> StageResult:
    """
    Pretrain patch embedding and encoder on the fold's training persons.

    Every clip draws a fresh mask each epoch from derive_seed(seed,
    'mask:<clip id>', epoch); validation masks are fixed per clip so the
    validation loss is comparable across epochs.
    """
    train_cfg = _checked(train_cfg, 'pretrain')
    run_dir = Path(run_dir) if run_dir is not None else None
    root, fold = train_cfg.seed, split.test_person
    modalities = model_cfg.modalities

    loader = ClipLoader(samples, split.train_ids, train_cfg.batch_size, modalities, shuffle=True,
                        seed=derive_seed(root, 'pretrain-batches', fold),
                        forbidden_persons=[fold], prefetch=train_cfg.prefetch)
    val_loader = ClipLoader(samples, _val_ids(split), train_cfg.batch_size, modalities, shuffle=False,
                            forbidden_persons=[fold])
    model = MAEPretrainModel(model_cfg, seed=derive_seed(root, 'init', fold))
    logger.info(f"Pretraining fold {fold}: {len(split.train_ids)} train / {len(split.val_ids)} val clips, "
                f"{model.n_parameters()} parameters")

    def val_masks(batch: Batch) -> MaskBatch:
        return sample_batch_masks(model_cfg.n_tokens, model_cfg.mask_ratio,
                                  _mask_seeds(root, 'val-mask', batch.clip_ids, fold))

    def step_loss(batch: Batch, epoch: int) -> Tensor:
        masks = sample_batch_masks(model_cfg.n_tokens, model_cfg.mask_ratio,
                                   _mask_seeds(root, 'mask', batch.clip_ids, epoch))
        return model.loss(batch.frames, masks)

    def evaluate() -> Dict[str, float]:
        total, count = 0.0, 0
        with no_grad():
            for batch in val_loader.epoch(0):
                total += model.loss(batch.frames, val_masks(batch)).item() * batch.size
                count += batch.size
        return {'val_loss': total / count}

    log = TrainLog(stage='pretrain', test_person=fold, metric_name='val_loss')
    _fit(model, 'pretrain', train_cfg, model_cfg.encoder_depth, loader, step_loss, evaluate, log, run_dir)

    checkpoint = None
    if run_dir is not None:
        checkpoint = save_checkpoint(model, model_cfg, run_dir / 'pretrain_checkpoint', 'pretrain',
                                     meta={'test_person': fold, **log.summary()})
        log.best_checkpoint = str(checkpoint.parent)
        first = next(val_loader.epoch(0))
        masks = val_masks(first)
        with no_grad():
            pred = model.forward(first.frames, masks).data
        preview = reconstruct_clip(first.frames[modalities[0]][0], pred[0], masks.plans[0], model_cfg)
        save_tensor(run_dir / 'reconstruction_preview.rvt', preview)
        log.write_jsonl(run_dir / 'pretrain_log.jsonl')
    return StageResult(model=model, log=log, checkpoint=checkpoint)


# ---------------------------------------------------------------------------
# Stage 2: supervised pose fine-tuning
# ---------------------------------------------------------------------------

def _pretrained_source(train_cfg: TrainConfig, pretrained) -> Tuple[Dict[str, np.ndarray], ModelConfig]:
    if isinstance(pretrained, tuple):
        return pretrained
    source = pretrained or train_cfg.checkpoint
    if source is None:
        raise CheckpointError("init='pretrained' needs a pretraining checkpoint")
    state, stored_cfg, manifest = load_checkpoint(source)
    if manifest.get('kind') != 'pretrain':
        raise CheckpointError(f"{source} holds a {manifest.get('kind')} checkpoint, expected pretrain")
    return state, stored_cfg


def finetune(samples: Sequence[RadarSample], split: LopoSplit, model_cfg: ModelConfig,
             train_cfg: TrainConfig, run_dir=None, pretrained=None) -> StageResult:
    """
    Train the pose model on the fold's training persons and early stop on
    validation MPJPE.

    pretrained may be a checkpoint directory or a (state, ModelConfig) pair;
    it is required when train_cfg.init is 'pretrained' unless
    train_cfg.checkpoint names one. The reconstruction decoder is never part
    of the fine-tuning model.
    """
    train_cfg = _checked(train_cfg, 'finetune')
    model_cfg = replace(model_cfg, head=train_cfg.head)
    run_dir = Path(run_dir) if run_dir is not None else None
    root, fold = train_cfg.seed, split.test_person
    modalities = model_cfg.modalities

    model = PoseEstimationModel(model_cfg, seed=derive_seed(root, 'init', fold))
    if train_cfg.init == 'pretrained':
        state, stored_cfg = _pretrained_source(train_cfg, pretrained)
        model.load_encoder(state, stored_cfg)

    loader = ClipLoader(samples, split.train_ids, train_cfg.batch_size, modalities, shuffle=True,
                        seed=derive_seed(root, 'finetune-batches', fold),
                        forbidden_persons=[fold], prefetch=train_cfg.prefetch)
    val_loader = ClipLoader(samples, _val_ids(split), train_cfg.batch_size, modalities, shuffle=False,
                            forbidden_persons=[fold])
    logger.info(f"Fine-tuning fold {fold} ({train_cfg.head} head, {train_cfg.init} init): "
                f"{len(split.train_ids)} train / {len(split.val_ids)} val clips")

    def step_loss(batch: Batch, epoch: int) -> Tensor:
        return model.loss(batch.frames, batch.labels)

    def evaluate() -> Dict[str, float]:
        total, count = 0.0, 0
        with no_grad():
            for batch in val_loader.epoch(0):
                total += model.loss(batch.frames, batch.labels).item() * batch.size
                count += batch.size
        pred, gt, scale, _ = predict_clips(model, val_loader)
        return {'val_loss': total / count, 'val_mpjpe': float(np.mean(joint_errors(pred, gt, scale)))}

    log = TrainLog(stage='finetune', test_person=fold, metric_name='val_mpjpe')
    _fit(model, 'finetune', train_cfg, model_cfg.encoder_depth, loader, step_loss, evaluate, log, run_dir)

    checkpoint = None
    if run_dir is not None:
        checkpoint = save_checkpoint(model, model_cfg, run_dir / 'finetune_checkpoint', 'finetune',
                                     meta={'test_person': fold, 'init': train_cfg.init, **log.summary()})
        log.best_checkpoint = str(checkpoint.parent)
        log.write_jsonl(run_dir / 'finetune_log.jsonl')
    return StageResult(model=model, log=log, checkpoint=checkpoint)
