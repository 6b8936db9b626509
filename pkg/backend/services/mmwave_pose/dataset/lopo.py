"""
Leave-One-Person-Out Splits
One split per person; the remaining clips are divided into train and a
stratified validation holdout
"""

import logging
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Dict, List, Sequence, Tuple

import numpy as np

logger = logging.getLogger(__name__)


class LeakageError(Exception):
    """Raised when clips of a held-out person reach training or validation"""
    pass


@dataclass
class LopoSplit:
    test_person: int
    train_ids: List[str]
    val_ids: List[str]
    test_ids: List[str]
    issues: List[Dict] = field(default_factory=list)

    def to_json(self) -> Dict:
        return {
            'test_person': self.test_person,
            'train_ids': self.train_ids,
            'val_ids': self.val_ids,
            'test_ids': self.test_ids,
            'issues': self.issues,
        }


def _records_of(manifest_or_records) -> List[Dict]:
    return manifest_or_records.records if hasattr(manifest_or_records, 'records') else list(manifest_or_records)


def _allocate(sizes: Sequence[int], val_fraction: float, rng: np.random.Generator) -> List[int]:
    """
    Largest-remainder allocation of round(val_fraction * total) holdout slots
    across strata, ties broken by a random permutation.
    """
    quotas = np.asarray(sizes, dtype=np.float64) * val_fraction
    counts = np.floor(quotas).astype(int)
    target = int(np.floor(val_fraction * sum(sizes) + 0.5))
    remaining = target - int(counts.sum())
    if remaining > 0:
        tie_break = rng.permutation(len(sizes))
        fractional = quotas - counts
        # sort by fractional part (descending), then by the random tie-break
        order = sorted(range(len(sizes)), key=lambda i: (-round(fractional[i], 12), tie_break[i]))
        for i in order:
            if remaining == 0:
                break
            if counts[i] < sizes[i]:
                counts[i] += 1
                remaining -= 1
    return counts.tolist()


def make_lopo_splits(manifest_or_records, val_fraction: float = 0.1, seed: int = 42) -> List[LopoSplit]:
    """
    Build one LopoSplit per person.

    Args:
        manifest_or_records: DatasetManifest or iterable of clip records with
            clip_id, person_id and action_id
        val_fraction: share of the non-test clips held out for validation
        seed: splitting seed; each split draws from default_rng([seed, test_person])

    Returns:
        Splits ordered by test person
    """
    if not 0.0 < val_fraction < 1.0:
        raise ValueError(f"val_fraction must lie in (0, 1), got {val_fraction}")
    records = _records_of(manifest_or_records)
    persons = sorted({r['person_id'] for r in records})
    if len(persons) < 2:
        raise ValueError(f"LOPO needs at least 2 persons, got {len(persons)}")

    splits = []
    for test_person in persons:
        rng = np.random.default_rng([seed, test_person])
        test_ids = sorted(r['clip_id'] for r in records if r['person_id'] == test_person)

        strata: Dict[Tuple[int, int], List[str]] = defaultdict(list)
        for r in records:
            if r['person_id'] != test_person:
                strata[(r['person_id'], r['action_id'])].append(r['clip_id'])

        issues = []
        groups: List[Tuple[str, List[str]]] = []
        pooled: List[str] = []
        for key in sorted(strata):
            ids = sorted(strata[key])
            if len(ids) < 2:
                pooled.extend(ids)
                issues.append({
                    'type': 'SMALL_STRATUM',
                    'severity': 'LOW',
                    'action': 'flag',
                    'message': f"Stratum person={key[0]} action={key[1]} has {len(ids)} clip(s); "
                               f"drawn unstratified",
                })
            else:
                groups.append((f"{key[0]}:{key[1]}", ids))
        if pooled:
            groups.append(('pooled', sorted(pooled)))
            logger.warning(f"Split for person {test_person}: {len(issues)} small strata pooled")

        counts = _allocate([len(ids) for _, ids in groups], val_fraction, rng)
        val_ids = []
        for (_, ids), count in zip(groups, counts):
            if count:
                val_ids.extend(rng.choice(ids, size=count, replace=False).tolist())
        val_set = set(val_ids)
        train_ids = sorted(cid for _, ids in groups for cid in ids if cid not in val_set)

        split = LopoSplit(test_person=test_person, train_ids=train_ids, val_ids=sorted(val_ids),
                          test_ids=test_ids, issues=issues)
        validate_split(split, records)
        splits.append(split)

    logger.info(f"Built {len(splits)} LOPO splits (val_fraction={val_fraction}, seed={seed})")
    return splits


def validate_split(split: LopoSplit, manifest_or_records):
    """Raise LeakageError unless the split partitions the clips without person overlap"""
    records = _records_of(manifest_or_records)
    person_of = {r['clip_id']: r['person_id'] for r in records}

    train, val = set(split.train_ids), set(split.val_ids)
    if train & val:
        raise LeakageError(f"Split {split.test_person}: {len(train & val)} clips in both train and val")
    leaked = [cid for cid in train | val if person_of[cid] == split.test_person]
    if leaked:
        raise LeakageError(f"Split {split.test_person}: test-person clips in train/val: {leaked[:5]}")
    non_test = {cid for cid, p in person_of.items() if p != split.test_person}
    if train | val != non_test:
        raise LeakageError(f"Split {split.test_person}: train and val do not cover the non-test clips")
    if any(person_of[cid] != split.test_person for cid in split.test_ids):
        raise LeakageError(f"Split {split.test_person}: test set contains other persons")
