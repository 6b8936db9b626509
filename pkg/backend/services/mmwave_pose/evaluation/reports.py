"""
Fold and Comparison Reports
Per-fold pose evaluation with per-action breakdowns, LOPO aggregation, and
JSON / markdown / CSV outputs of the statistical comparison
"""

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from dataset.batching import Batch, ClipLoader
from dataset.container import RadarSample
from evaluation.metrics import PCK_THRESHOLD_M, joint_errors
from evaluation.statistics import StatsReport, compare_methods

logger = logging.getLogger(__name__)

FOLD_REPORT_NAME = 'fold_report.json'


def predict_clips(model, loader: ClipLoader) -> Tuple[np.ndarray, np.ndarray, np.ndarray, List[Batch]]:
    """Predicted and ground-truth joints [N, n_out, K, 2] plus per-clip scales [N, 2]"""
    preds, gts, scales, batches = [], [], [], []
    for batch in loader.epoch(0):
        preds.append(model.predict(batch.frames))
        gts.append(batch.labels)
        scales.append(batch.metres_per_unit)
        batches.append(batch)
    return np.concatenate(preds), np.concatenate(gts), np.concatenate(scales), batches


@dataclass
class FoldReport:
    """Test-person evaluation of one trained fold model"""
    test_person: int
    method: str
    mpjpe_m: float
    pck_05: float
    n_clips: int
    per_action: List[Dict] = field(default_factory=list)
    clips: List[Dict] = field(default_factory=list)
    interference: Optional[Dict] = None

    def validate(self):
        if not 0.0 <= self.pck_05 <= 1.0:
            raise ValueError(f"Fold {self.test_person}: PCK {self.pck_05} outside [0, 1]")
        if not self.mpjpe_m >= 0.0:
            raise ValueError(f"Fold {self.test_person}: MPJPE {self.mpjpe_m} is negative or NaN")

    def to_json(self, include_clips: bool = True) -> Dict:
        payload = {
            'test_person': self.test_person,
            'method': self.method,
            'mpjpe_m': self.mpjpe_m,
            'pck_05': self.pck_05,
            'n_clips': self.n_clips,
            'per_action': self.per_action,
        }
        if self.interference is not None:
            payload['interference'] = self.interference
        if include_clips:
            payload['clips'] = self.clips
        return payload

    @classmethod
    def from_json(cls, payload: Dict) -> 'FoldReport':
        report = cls(
            test_person=payload['test_person'],
            method=payload['method'],
            mpjpe_m=payload['mpjpe_m'],
            pck_05=payload['pck_05'],
            n_clips=payload['n_clips'],
            per_action=payload.get('per_action', []),
            clips=payload.get('clips', []),
            interference=payload.get('interference'),
        )
        report.validate()
        return report


def _score(model, samples: Sequence[RadarSample], clip_ids: Sequence[str], modalities: Sequence[str],
           batch_size: int) -> pd.DataFrame:
    """One row per clip with its prediction, ground truth and metric errors"""
    loader = ClipLoader(samples, clip_ids, batch_size, modalities, shuffle=False)
    pred, gt, scale, batches = predict_clips(model, loader)
    errors = joint_errors(pred, gt, scale)
    within = errors <= PCK_THRESHOLD_M + 1e-12
    ids = [cid for b in batches for cid in b.clip_ids]
    actions = np.concatenate([b.action_ids for b in batches])
    return pd.DataFrame({
        'clip_id': ids,
        'action_id': actions.astype(int),
        'mpjpe_m': errors.reshape(len(ids), -1).mean(axis=1),
        'pck_05': within.reshape(len(ids), -1).mean(axis=1),
        'pred': [p.tolist() for p in pred],
        'gt': [g.tolist() for g in gt],
    })


def per_action_breakdown(scores: pd.DataFrame) -> List[Dict]:
    grouped = scores.groupby('action_id').agg(
        mpjpe_m=('mpjpe_m', 'mean'),
        pck_05=('pck_05', 'mean'),
        n_clips=('clip_id', 'count'),
    ).reset_index()
    return [
        {'action_id': int(r.action_id), 'mpjpe_m': float(r.mpjpe_m),
         'pck_05': float(r.pck_05), 'n_clips': int(r.n_clips)}
        for r in grouped.itertuples(index=False)
    ]


def evaluate_fold(model, samples: Sequence[RadarSample], test_ids: Sequence[str], test_person: int,
                  method: str, batch_size: int = 8,
                  interference_samples: Optional[Sequence[RadarSample]] = None) -> FoldReport:
    """
    Evaluate a fold model on the held-out person's clips.

    When interference_samples is given, the same model is also scored on
    those clips (the test person recorded with a bystander) and the relative
    MPJPE inflation over the clean clips is reported.
    """
    modalities = model.cfg.modalities
    scores = _score(model, samples, test_ids, modalities, batch_size)
    # Every clip has the same number of joints, so the clip mean of means is the joint mean
    report = FoldReport(
        test_person=int(test_person),
        method=method,
        mpjpe_m=float(scores['mpjpe_m'].mean()),
        pck_05=float(scores['pck_05'].mean()),
        n_clips=len(scores),
        per_action=per_action_breakdown(scores),
        clips=[{'clip_id': r.clip_id, 'action_id': int(r.action_id), 'pred': r.pred, 'gt': r.gt}
               for r in scores.itertuples(index=False)],
    )

    if interference_samples:
        noisy_ids = [s.clip_id for s in interference_samples if s.person_id == test_person]
        noisy = _score(model, interference_samples, noisy_ids, modalities, batch_size)
        noisy_mpjpe = float(noisy['mpjpe_m'].mean())
        report.interference = {
            'mpjpe_m': noisy_mpjpe,
            'pck_05': float(noisy['pck_05'].mean()),
            'n_clips': len(noisy),
            'mpjpe_inflation': (noisy_mpjpe - report.mpjpe_m) / report.mpjpe_m if report.mpjpe_m > 0 else None,
        }
        logger.info(f"Fold {test_person}: interference MPJPE {noisy_mpjpe:.4f} m "
                    f"vs clean {report.mpjpe_m:.4f} m")

    report.validate()
    logger.info(f"Fold {test_person} [{method}]: MPJPE {report.mpjpe_m:.4f} m, PCK@0.05 {report.pck_05:.3f}",
                extra={'fold': test_person, 'mpjpe_m': report.mpjpe_m, 'pck_05': report.pck_05})
    return report


def write_fold_report(report: FoldReport, directory) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    path = directory / FOLD_REPORT_NAME
    with open(path, 'w') as f:
        json.dump(report.to_json(), f, indent=2, sort_keys=True)
    pd.DataFrame(report.per_action).to_csv(directory / 'per_action.csv', index=False)
    logger.info(f"Fold report saved: {path}")
    return path


def load_fold_reports(directory) -> List[FoldReport]:
    """All fold reports below directory, ordered by test person"""
    paths = sorted(Path(directory).rglob(FOLD_REPORT_NAME))
    if not paths:
        raise FileNotFoundError(f"No {FOLD_REPORT_NAME} found under {directory}")
    reports = []
    for path in paths:
        with open(path) as f:
            reports.append(FoldReport.from_json(json.load(f)))
    return sorted(reports, key=lambda r: r.test_person)


def aggregate_folds(reports: Sequence[FoldReport]) -> Dict:
    """LOPO mean and sample standard deviation of the fold metrics"""
    frame = pd.DataFrame([{'test_person': r.test_person, 'mpjpe_m': r.mpjpe_m, 'pck_05': r.pck_05}
                          for r in reports]).sort_values('test_person')
    ddof = 1 if len(frame) > 1 else 0
    summary = {
        'n_folds': len(frame),
        'mpjpe_m': {'mean': float(frame['mpjpe_m'].mean()), 'std': float(frame['mpjpe_m'].std(ddof=ddof))},
        'pck_05': {'mean': float(frame['pck_05'].mean()), 'std': float(frame['pck_05'].std(ddof=ddof))},
        'per_fold': [{'test_person': int(r.test_person), 'mpjpe_m': float(r.mpjpe_m), 'pck_05': float(r.pck_05)}
                     for r in frame.itertuples(index=False)],
    }
    inflations = [r.interference['mpjpe_inflation'] for r in reports
                  if r.interference and r.interference.get('mpjpe_inflation') is not None]
    if inflations:
        summary['interference_mpjpe_inflation'] = float(np.mean(inflations))

    actions = pd.DataFrame([dict(a, test_person=r.test_person) for r in reports for a in r.per_action])
    if not actions.empty:
        by_action = actions.groupby('action_id').agg(mpjpe_m=('mpjpe_m', 'mean'), pck_05=('pck_05', 'mean'))
        summary['per_action'] = [
            {'action_id': int(a), 'mpjpe_m': float(row.mpjpe_m), 'pck_05': float(row.pck_05)}
            for a, row in by_action.iterrows()
        ]
    return summary


def compare_fold_reports(method_reports: Mapping[str, Sequence[FoldReport]], metric: str = 'mpjpe_m') -> StatsReport:
    """Align fold metrics by test person and run the gated comparison"""
    persons = None
    per_fold = {}
    for method, reports in method_reports.items():
        by_person = {r.test_person: getattr(r, metric) for r in reports}
        if persons is None:
            persons = sorted(by_person)
        elif sorted(by_person) != persons:
            raise ValueError(f"Method {method} covers persons {sorted(by_person)}, expected {persons}")
        per_fold[method] = [by_person[p] for p in persons]
    return compare_methods(per_fold, metric=metric)


class ReportWriter:
    """Writes a StatsReport and the results table next to it"""

    def __init__(self, report_dir):
        self.report_dir = Path(report_dir)
        self.report_dir.mkdir(parents=True, exist_ok=True)

    def results_table(self, stats_report: StatsReport, method_reports: Mapping[str, Sequence[FoldReport]],
                      reference: Optional[str] = None) -> pd.DataFrame:
        """One row per method: MPJPE and PCK mean/std plus the adjusted p-value against the reference"""
        reference = reference or stats_report.methods[0]
        if reference not in stats_report.methods:
            raise ValueError(f"Reference method {reference} is not among {stats_report.methods}")

        rows = []
        for method in stats_report.methods:
            summary = aggregate_folds(method_reports[method])
            row = {
                'method': method,
                'mpjpe_mean': summary['mpjpe_m']['mean'],
                'mpjpe_std': summary['mpjpe_m']['std'],
                'pck_mean_pct': 100.0 * summary['pck_05']['mean'],
                'pck_std_pct': 100.0 * summary['pck_05']['std'],
                'p_adj_vs_reference': None,
                'effect_size': None,
                'effect_category': None,
            }
            if method != reference and stats_report.significant:
                comparison = stats_report.comparison(method, reference)
                row['p_adj_vs_reference'] = comparison.p_adj
                row['effect_size'] = comparison.effect_size
                row['effect_category'] = comparison.effect_category
            rows.append(row)
        return pd.DataFrame(rows)

    def write(self, stats_report: StatsReport, method_reports: Mapping[str, Sequence[FoldReport]],
              reference: Optional[str] = None) -> Dict[str, Path]:
        table = self.results_table(stats_report, method_reports, reference)
        reference = reference or stats_report.methods[0]

        json_path = self.report_dir / 'stats_report.json'
        payload = stats_report.to_json()
        payload['reference'] = reference
        payload['aggregate'] = {m: aggregate_folds(method_reports[m]) for m in stats_report.methods}
        with open(json_path, 'w') as f:
            json.dump(payload, f, indent=2, sort_keys=True)
        logger.info(f"Stats report saved: {json_path}")

        csv_path = self.report_dir / 'results_table.csv'
        table.to_csv(csv_path, index=False)
        logger.info(f"CSV report saved: {csv_path}")

        md_path = self.report_dir / 'results_table.md'
        self._create_summary_report(stats_report, table, reference, md_path)
        return {'json': json_path, 'csv': csv_path, 'markdown': md_path}

    def _create_summary_report(self, stats_report: StatsReport, table: pd.DataFrame, reference: str, path: Path):
        with open(path, 'w') as f:
            f.write("# Method Comparison\n\n")
            f.write(f"- Folds: {stats_report.n_folds}\n")
            f.write(f"- Friedman: chi2 = {stats_report.friedman['statistic']:.4f}, "
                    f"p = {stats_report.friedman['p']:.4g}\n")
            if stats_report.significant:
                f.write(f"- Pairwise family: {stats_report.test_family} (Bonferroni, "
                        f"k = {len(stats_report.pairwise)})\n")
            else:
                f.write("- Not significant at alpha = 0.05; no pairwise comparisons\n")
            f.write(f"- Reference method: {reference}\n\n")

            f.write("| Method | MPJPE (m) | PCK@0.05 (%) | p_adj vs ref | Effect |\n")
            f.write("|---|---|---|---|---|\n")
            for row in table.itertuples(index=False):
                p_adj = '-' if pd.isna(row.p_adj_vs_reference) else f"{row.p_adj_vs_reference:.4g}"
                effect = '-' if row.effect_category is None else f"{row.effect_size:.3f} ({row.effect_category})"
                f.write(f"| {row.method} | {row.mpjpe_mean:.4f} ± {row.mpjpe_std:.4f} | "
                        f"{row.pck_mean_pct:.1f} ± {row.pck_std_pct:.1f} | {p_adj} | {effect} |\n")

            if stats_report.significant:
                f.write("\n## Pairwise Comparisons\n\n")
                for c in stats_report.pairwise:
                    f.write(f"- **{c.method_a} vs {c.method_b}**: p_raw = {c.p_raw:.4g}, p_adj = {c.p_adj:.4g}, "
                            f"{c.effect_type} = {c.effect_size:.3f} ({c.effect_category}), better: {c.better}\n")
        logger.info(f"Summary report saved: {path}")
