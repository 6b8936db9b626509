"""
Clip Batching
Seeded per-epoch shuffling of split-filtered samples, with optional prefetch
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Dict, Iterable, Iterator, List, Sequence

import numpy as np

from dataset.container import RadarSample
from dataset.lopo import LeakageError
from seeding import derive_rng

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Batch:
    """Immutable batch handed from the loader to a training step"""
    frames: Dict[str, np.ndarray]
    labels: np.ndarray
    metres_per_unit: np.ndarray
    person_ids: np.ndarray
    action_ids: np.ndarray
    clip_ids: List[str]

    @property
    def size(self) -> int:
        return len(self.clip_ids)


def _frozen(array: np.ndarray) -> np.ndarray:
    array.flags.writeable = False
    return array


def collate(samples: Sequence[RadarSample], modalities: Sequence[str]) -> Batch:
    return Batch(
        frames={m: _frozen(np.stack([s.frames(m) for s in samples])) for m in modalities},
        labels=_frozen(np.stack([s.labels for s in samples]).astype(np.float32)),
        metres_per_unit=_frozen(np.array([s.metres_per_unit for s in samples], dtype=np.float64)),
        person_ids=_frozen(np.array([s.person_id for s in samples])),
        action_ids=_frozen(np.array([s.action_id for s in samples])),
        clip_ids=[s.clip_id for s in samples],
    )


class ClipLoader:
    """
    Iterate batches over the samples named by clip_ids.

    Every batch is checked against forbidden_persons (the held-out test
    person); a hit raises LeakageError. Shuffling draws from
    derive_rng(seed, 'batches', epoch) so each epoch order is reproducible.
    """

    def __init__(self, samples: Iterable[RadarSample], clip_ids: Sequence[str], batch_size: int,
                 modalities: Sequence[str], shuffle: bool = True, seed: int = 0,
                 forbidden_persons: Iterable[int] = (), prefetch: bool = False):
        by_id = {s.clip_id: s for s in samples}
        missing = [cid for cid in clip_ids if cid not in by_id]
        if missing:
            raise KeyError(f"Unknown clip ids: {missing[:5]}")
        if batch_size < 1:
            raise ValueError("batch_size must be >= 1")

        self.samples = [by_id[cid] for cid in clip_ids]
        self.batch_size = batch_size
        self.modalities = list(modalities)
        self.shuffle = shuffle
        self.seed = seed
        self.forbidden_persons = set(forbidden_persons)
        self.prefetch = prefetch

        leaked = [s.clip_id for s in self.samples if s.person_id in self.forbidden_persons]
        if leaked:
            raise LeakageError(f"Loader built over held-out person clips: {leaked[:5]}")

    def __len__(self) -> int:
        return (len(self.samples) + self.batch_size - 1) // self.batch_size

    def _order(self, epoch: int) -> np.ndarray:
        if not self.shuffle:
            return np.arange(len(self.samples))
        return derive_rng(self.seed, 'batches', epoch).permutation(len(self.samples))

    def _assemble(self, indices: np.ndarray) -> Batch:
        chosen = [self.samples[i] for i in indices]
        batch = collate(chosen, self.modalities)
        if self.forbidden_persons.intersection(batch.person_ids.tolist()):
            raise LeakageError(f"Batch contains held-out person clips: {batch.clip_ids}")
        return batch

    def epoch(self, epoch: int = 0) -> Iterator[Batch]:
        order = self._order(epoch)
        chunks = [order[i:i + self.batch_size] for i in range(0, len(order), self.batch_size)]
        if not self.prefetch or not chunks:
            for chunk in chunks:
                yield self._assemble(chunk)
            return

        with ThreadPoolExecutor(max_workers=1) as pool:
            pending = pool.submit(self._assemble, chunks[0])
            for next_chunk in chunks[1:] + [None]:
                batch = pending.result()
                pending = pool.submit(self._assemble, next_chunk) if next_chunk is not None else None
                yield batch

    def __iter__(self) -> Iterator[Batch]:
        return self.epoch(0)
