"""
Training Configuration
Per-stage optimisation settings with stage-dependent defaults
"""

from dataclasses import dataclass
from typing import List, Optional, Tuple

STAGES = ('pretrain', 'finetune')
INITS = ('random', 'pretrained')

STAGE_DEFAULTS = {
    'pretrain': {'base_lr': 1.5e-4, 'betas': (0.9, 0.95)},
    'finetune': {'base_lr': 1e-3, 'betas': (0.9, 0.999)},
}


@dataclass
class TrainConfig:
    """Optimiser, schedule and early-stopping settings for one training stage"""
    stage: str = 'finetune'
    epochs: int = 100
    batch_size: int = 8
    base_lr: Optional[float] = None
    betas: Optional[Tuple[float, float]] = None
    eps: float = 1e-8
    weight_decay: float = 0.05
    warmup_epochs: int = 5
    min_lr: float = 0.0
    layerwise_decay: float = 0.75
    early_stop_patience: int = 10
    init: str = 'random'
    checkpoint: Optional[str] = None
    head: str = 'heatmap'
    seed: int = 42
    prefetch: bool = False

    @property
    def lr(self) -> float:
        return self.base_lr if self.base_lr is not None else STAGE_DEFAULTS[self.stage]['base_lr']

    @property
    def adam_betas(self) -> Tuple[float, float]:
        return tuple(self.betas) if self.betas is not None else STAGE_DEFAULTS[self.stage]['betas']

    @property
    def effective_layerwise_decay(self) -> float:
        """Pretraining updates every layer at the base rate"""
        return self.layerwise_decay if self.stage == 'finetune' else 1.0

    def validate(self) -> List[str]:
        problems = []
        if self.stage not in STAGES:
            problems.append(f"stage must be one of {STAGES}")
        if self.epochs < 1:
            problems.append("epochs must be >= 1")
        if self.batch_size < 1:
            problems.append("batch_size must be >= 1")
        if self.early_stop_patience < 1 or self.early_stop_patience > self.epochs:
            problems.append("early_stop_patience must lie in [1, epochs]")
        if not 0.0 < self.layerwise_decay <= 1.0:
            problems.append("layerwise_decay must lie in (0, 1]")
        if self.weight_decay < 0:
            problems.append("weight_decay must be non-negative")
        if self.warmup_epochs < 0:
            problems.append("warmup_epochs must be non-negative")
        if self.init not in INITS:
            problems.append(f"init must be one of {INITS}")
        if self.stage in STAGES and self.lr <= 0:
            problems.append("base_lr must be positive")
        betas = self.adam_betas if self.stage in STAGES else (0.9, 0.999)
        if not all(0.0 <= b < 1.0 for b in betas):
            problems.append("betas must lie in [0, 1)")
        return problems
