"""
Statistical Comparison of Methods
Friedman omnibus gate, Shapiro-Wilk normality screen, paired t or Wilcoxon
signed-rank post-hoc tests with Bonferroni correction and effect sizes
"""

import itertools
import logging
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Mapping, Sequence, Tuple

import numpy as np
from scipy import stats

logger = logging.getLogger(__name__)

ALPHA = 0.05

# Cohen's conventional small / medium / large cut points
EFFECT_THRESHOLDS = {
    'd': (0.2, 0.5, 0.8),
    'r': (0.1, 0.3, 0.5),
}
EFFECT_LABELS = ('negligible', 'small', 'medium', 'large')


class DegenerateSampleError(Exception):
    """Raised when a sample cannot support the requested test (too small, constant or all-zero differences)"""
    pass


def _paired(a: Sequence[float], b: Sequence[float]) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError(f"Paired samples must be 1-D and equally long, got {a.shape} and {b.shape}")
    return a - b


def friedman_test(matrix) -> Tuple[float, float]:
    """
    Friedman chi-square over an [n_folds, k_methods] matrix.

    Values are ranked within each fold (average ranks on ties); the statistic
    is 12n / (k(k+1)) * sum_j (mean rank_j - (k+1)/2)^2 with k-1 degrees of
    freedom. No tie correction is applied to the statistic.
    """
    matrix = np.asarray(matrix, dtype=np.float64)
    if matrix.ndim != 2:
        raise ValueError(f"Friedman test needs an [n_folds, k_methods] matrix, got {matrix.shape}")
    n, k = matrix.shape
    if k < 2:
        raise DegenerateSampleError(f"Friedman test needs at least 2 methods, got {k}")
    if n < 2:
        raise DegenerateSampleError(f"Friedman test needs at least 2 folds, got {n}")

    ranks = np.apply_along_axis(stats.rankdata, 1, matrix)
    mean_ranks = ranks.mean(axis=0)
    statistic = 12.0 * n / (k * (k + 1)) * float(np.sum((mean_ranks - (k + 1) / 2.0) ** 2))
    p_value = float(stats.chi2.sf(statistic, k - 1))
    return statistic, p_value


def shapiro_wilk(sample: Sequence[float]) -> Tuple[float, float]:
    """W and p of the Shapiro-Wilk test (Royston's algorithm via scipy)"""
    sample = np.asarray(sample, dtype=np.float64)
    if not 3 <= sample.size <= 5000:
        raise DegenerateSampleError(f"Shapiro-Wilk needs 3 to 5000 values, got {sample.size}")
    if np.ptp(sample) == 0:
        raise DegenerateSampleError("Shapiro-Wilk is undefined for a constant sample")
    result = stats.shapiro(sample)
    return float(result.statistic), float(result.pvalue)


@dataclass
class PairedTResult:
    t: float
    p: float
    cohens_d: float
    n: int


def paired_t(a: Sequence[float], b: Sequence[float]) -> PairedTResult:
    diff = _paired(a, b)
    n = diff.size
    if n < 2:
        raise DegenerateSampleError(f"Paired t-test needs at least 2 pairs, got {n}")
    sd = float(np.std(diff, ddof=1))
    if sd == 0.0:
        raise DegenerateSampleError("Paired differences have zero standard deviation")
    mean = float(np.mean(diff))
    t = mean / (sd / np.sqrt(n))
    p = float(min(1.0, 2.0 * stats.t.sf(abs(t), n - 1)))
    return PairedTResult(t=float(t), p=p, cohens_d=mean / sd, n=n)


@dataclass
class WilcoxonResult:
    W: float
    Z: float
    p: float
    r: float
    n: int


def wilcoxon_signed_rank(a: Sequence[float], b: Sequence[float]) -> WilcoxonResult:
    """
    Two-sided Wilcoxon signed-rank test by normal approximation.

    Zero differences are dropped and n counts the remaining pairs. W is the
    positive rank sum. Z uses the tie-corrected variance and a 0.5
    continuity correction; the effect size is r = |Z| / sqrt(2n).
    """
    diff = _paired(a, b)
    diff = diff[diff != 0.0]
    n = diff.size
    if n == 0:
        raise DegenerateSampleError("All paired differences are zero")
    if n < 5:
        raise DegenerateSampleError(f"Normal-approximation Wilcoxon needs at least 5 non-zero pairs, got {n}")

    ranks = stats.rankdata(np.abs(diff))
    w_plus = float(ranks[diff > 0].sum())
    mean = n * (n + 1) / 4.0
    _, tie_counts = np.unique(ranks, return_counts=True)
    variance = n * (n + 1) * (2 * n + 1) / 24.0 - float(np.sum(tie_counts ** 3 - tie_counts)) / 48.0

    deviation = w_plus - mean
    correction = 0.5 * np.sign(deviation)
    z = float((deviation - correction) / np.sqrt(variance)) if abs(deviation) > 0.5 else 0.0
    p = float(min(1.0, 2.0 * stats.norm.sf(abs(z))))
    return WilcoxonResult(W=w_plus, Z=z, p=p, r=abs(z) / np.sqrt(2.0 * n), n=n)


def bonferroni(p_values: Sequence[float]) -> List[float]:
    """p_adj = min(1, k * p) with k the number of comparisons"""
    k = len(p_values)
    return [min(1.0, k * float(p)) for p in p_values]


def effect_size_category(value: float, kind: str) -> str:
    small, medium, large = EFFECT_THRESHOLDS[kind]
    magnitude = abs(value)
    if magnitude >= large:
        return EFFECT_LABELS[3]
    if magnitude >= medium:
        return EFFECT_LABELS[2]
    if magnitude >= small:
        return EFFECT_LABELS[1]
    return EFFECT_LABELS[0]


@dataclass
class PairwiseComparison:
    method_a: str
    method_b: str
    test: str
    statistic: float
    p_raw: float
    p_adj: float
    effect_size: float
    effect_type: str
    effect_category: str
    better: str


@dataclass
class StatsReport:
    """Outcome of the gated comparison; pairwise is empty when Friedman is not significant"""
    methods: List[str]
    metric: str
    matrix: List[List[float]]
    friedman: Dict[str, float]
    alpha: float = ALPHA
    shapiro: Dict[str, Dict[str, float]] = field(default_factory=dict)
    test_family: str = 'none'
    pairwise: List[PairwiseComparison] = field(default_factory=list)

    @property
    def n_folds(self) -> int:
        return len(self.matrix)

    @property
    def significant(self) -> bool:
        return self.friedman['p'] < self.alpha

    def comparison(self, a: str, b: str) -> PairwiseComparison:
        for c in self.pairwise:
            if {c.method_a, c.method_b} == {a, b}:
                return c
        raise KeyError(f"No pairwise comparison between {a} and {b}")

    def to_json(self) -> Dict:
        payload = {
            'methods': self.methods,
            'metric': self.metric,
            'n_folds': self.n_folds,
            'matrix': self.matrix,
            'alpha': self.alpha,
            'friedman': self.friedman,
            'test_family': self.test_family,
        }
        if self.significant:
            payload['shapiro'] = self.shapiro
            payload['pairwise'] = [asdict(c) for c in self.pairwise]
        return payload


def compare_methods(per_fold: Mapping[str, Sequence[float]], metric: str = 'mpjpe_m',
                    alpha: float = ALPHA, lower_is_better: bool = True) -> StatsReport:
    """
    Friedman gate, then (only when significant) Shapiro-Wilk on every method;
    paired t-tests for every pair if all methods look normal, Wilcoxon for
    every pair otherwise. Raw p-values are Bonferroni-adjusted over all pairs.
    """
    methods = list(per_fold)
    if len(methods) < 2:
        raise DegenerateSampleError(f"Need at least 2 methods to compare, got {len(methods)}")
    lengths = {m: len(per_fold[m]) for m in methods}
    if len(set(lengths.values())) != 1:
        raise ValueError(f"Methods have unequal fold counts: {lengths}")

    matrix = np.column_stack([np.asarray(per_fold[m], dtype=np.float64) for m in methods])
    statistic, p_value = friedman_test(matrix)
    report = StatsReport(
        methods=methods,
        metric=metric,
        matrix=matrix.tolist(),
        friedman={'statistic': statistic, 'p': p_value},
        alpha=alpha,
    )
    logger.info(f"Friedman over {len(methods)} methods x {matrix.shape[0]} folds: "
                f"chi2={statistic:.4f}, p={p_value:.4g}")
    if not report.significant:
        logger.info("Friedman test not significant; skipping pairwise comparisons")
        return report

    for m in methods:
        w, p = shapiro_wilk(per_fold[m])
        report.shapiro[m] = {'W': w, 'p': p, 'normal': bool(p >= alpha)}
    all_normal = all(s['normal'] for s in report.shapiro.values())
    report.test_family = 'paired_t' if all_normal else 'wilcoxon'

    raw = []
    for a, b in itertools.combinations(methods, 2):
        if all_normal:
            result = paired_t(per_fold[a], per_fold[b])
            raw.append((a, b, result.t, result.p, result.cohens_d, 'd'))
        else:
            result = wilcoxon_signed_rank(per_fold[a], per_fold[b])
            raw.append((a, b, result.W, result.p, result.r, 'r'))

    adjusted = bonferroni([entry[3] for entry in raw])
    for (a, b, stat, p_raw, effect, kind), p_adj in zip(raw, adjusted):
        mean_a, mean_b = np.mean(per_fold[a]), np.mean(per_fold[b])
        better = a if (mean_a <= mean_b) == lower_is_better else b
        report.pairwise.append(PairwiseComparison(
            method_a=a, method_b=b, test=report.test_family,
            statistic=float(stat), p_raw=float(p_raw), p_adj=p_adj,
            effect_size=float(effect), effect_type=kind,
            effect_category=effect_size_category(effect, kind),
            better=better,
        ))
    logger.info(f"{len(report.pairwise)} pairwise {report.test_family} comparisons (Bonferroni k={len(raw)})")
    return report
