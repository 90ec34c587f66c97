"""Metrics, confidence intervals, ranking statistics, and drift diagnostics.

Covers accuracy / weighted F1 / confusion matrices, t-based confidence
intervals, average-rank tables with the Nemenyi critical distance, a
Tukey HSD post-hoc comparison, and per-class mean-flowpic / packet-size
KDE drift diagnostics.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import stats as sps

from .dataio import MAX_PACKET_SIZE, Dataset
from .flowpic import build_flowpic

# Studentized-range critical values divided by sqrt(2), k = 2..20.
# The k=7, alpha=0.05 entry (2.949) anchors the Nemenyi critical distance.
_Q_TABLE = {
    0.05: [1.960, 2.344, 2.569, 2.728, 2.850, 2.949, 3.031, 3.102, 3.164,
           3.219, 3.268, 3.313, 3.354, 3.391, 3.426, 3.458, 3.489, 3.517,
           3.544],
    0.10: [1.645, 2.052, 2.291, 2.460, 2.589, 2.693, 2.780, 2.855, 2.920,
           2.978, 3.030, 3.077, 3.120, 3.159, 3.196, 3.230, 3.261, 3.291,
           3.319],
}


@dataclass
class MetricSet:
    accuracy: float
    weighted_f1: float
    confusion: np.ndarray
    classes: list
    per_class_precision: np.ndarray
    per_class_recall: np.ndarray
    per_class_f1: np.ndarray

    def normalized_confusion(self) -> np.ndarray:
        """Row-normalized confusion (rows with no support stay zero)."""
        sums = self.confusion.sum(axis=1, keepdims=True)
        return np.divide(self.confusion, sums, where=sums > 0,
                         out=np.zeros(self.confusion.shape))


def compute_metrics(true_labels, predicted_labels, classes=None) -> MetricSet:
    """Accuracy, per-class precision/recall/F1, support-weighted F1,
    and the confusion matrix (rows = true class)."""
    true_labels = list(true_labels)
    predicted_labels = list(predicted_labels)
    if len(true_labels) != len(predicted_labels) or not true_labels:
        raise ValueError("label lists must be equal-length and nonempty")
    if classes is None:
        classes = sorted(set(true_labels) | set(predicted_labels))
    index = {c: i for i, c in enumerate(classes)}
    for lab in true_labels + predicted_labels:
        if lab not in index:
            raise ValueError(f"label {lab!r} outside known class set")
    k = len(classes)
    confusion = np.zeros((k, k), dtype=np.int64)
    for t, p in zip(true_labels, predicted_labels):
        confusion[index[t], index[p]] += 1
    support = confusion.sum(axis=1)
    pred_count = confusion.sum(axis=0)
    diag = np.diag(confusion).astype(np.float64)
    precision = np.divide(diag, pred_count, where=pred_count > 0,
                          out=np.zeros(k))
    recall = np.divide(diag, support, where=support > 0, out=np.zeros(k))
    denom = precision + recall
    f1 = np.divide(2 * precision * recall, denom, where=denom > 0,
                   out=np.zeros(k))
    accuracy = float(diag.sum() / confusion.sum())
    weighted_f1 = float((f1 * support).sum() / support.sum())
    return MetricSet(accuracy, weighted_f1, confusion, list(classes),
                     precision, recall, f1)


def t_confidence_interval(samples, level=0.95) -> tuple[float, float]:
    """Mean and t-based half-width: t_{(1+level)/2, n-1} * s / sqrt(n)."""
    samples = np.asarray(samples, dtype=np.float64)
    n = len(samples)
    if n < 2:
        raise ValueError("need at least 2 samples")
    mean = float(samples.mean())
    s = float(samples.std(ddof=1))
    tq = float(sps.t.ppf((1 + level) / 2, n - 1))
    return mean, tq * s / np.sqrt(n)


@dataclass
class RankTable:
    methods: list
    observations: np.ndarray  # method x trial
    average_ranks: np.ndarray


def rank_methods(methods, observations) -> RankTable:
    """Per-trial dense ranking (rank 1 = best, higher observation wins),
    ties get the group-average rank; averaged across trials.

    Observations are rounded to 6 decimals before tie detection so tie
    behavior is deterministic.
    """
    obs = np.asarray(observations, dtype=np.float64)
    if obs.ndim != 2 or obs.shape[0] < 2 or obs.shape[1] < 1:
        raise ValueError("observations must be (methods >= 2) x (trials >= 1)")
    if len(methods) != obs.shape[0]:
        raise ValueError("methods/observations shape mismatch")
    if not np.all(np.isfinite(obs)):
        raise ValueError("non-finite observation")
    rounded = np.round(obs, 6)
    ranks = np.empty_like(obs)
    for j in range(obs.shape[1]):
        ranks[:, j] = sps.rankdata(-rounded[:, j], method="average")
    return RankTable(list(methods), obs, ranks.mean(axis=1))


def friedman_statistic(rank_table: RankTable) -> float:
    """Friedman chi-square over the average ranks (informational; the
    pipeline goes straight to the Nemenyi post-hoc)."""
    k = len(rank_table.methods)
    n = rank_table.observations.shape[1]
    r = rank_table.average_ranks
    return float(12 * n / (k * (k + 1)) * (np.sum(r**2) - k * (k + 1) ** 2 / 4))


def nemenyi_cd(k: int, n: int, alpha: float = 0.05) -> float:
    """Critical distance q_alpha * sqrt(k(k+1) / (6N)) from the embedded
    q table (k = 2..20, alpha in {0.05, 0.10})."""
    if alpha not in _Q_TABLE:
        raise ValueError(f"unsupported alpha {alpha}; choose 0.05 or 0.10")
    if not 2 <= k <= 20:
        raise ValueError("k must be in 2..20")
    if n < 1:
        raise ValueError("n must be >= 1")
    q = _Q_TABLE[alpha][k - 2]
    return q * np.sqrt(k * (k + 1) / (6.0 * n))


def cd_groups(rank_table: RankTable, cd: float) -> list[list]:
    """Maximal groups of methods whose pairwise average-rank gaps are all
    below the critical distance (groups may overlap, as in the bars of a
    critical-distance diagram)."""
    order = np.argsort(rank_table.average_ranks, kind="stable")
    ranks = rank_table.average_ranks[order]
    names = [rank_table.methods[i] for i in order]
    k = len(names)
    runs = []
    for i in range(k):
        j = i
        while j + 1 < k and ranks[j + 1] - ranks[i] < cd:
            j += 1
        runs.append((i, j))
    groups = []
    seen = set()
    for i, j in runs:
        if any(a <= i and j <= b and (a, b) != (i, j) for a, b in runs):
            continue  # contained in a larger run
        if (i, j) not in seen:
            seen.add((i, j))
            groups.append(names[i:j + 1])
    return groups


@dataclass
class TukeyResult:
    groups: list
    p_values: np.ndarray  # pairwise, symmetric
    different: np.ndarray  # boolean, p < alpha
    alpha: float


def tukey_hsd(groups_obs, alpha: float = 0.05, labels=None) -> TukeyResult:
    """Tukey HSD on group means with pooled within-group variance.

    P-values come from the studentized range distribution.  Degenerate
    zero pooled variance: p=1 for equal means, p=0 otherwise.
    """
    groups_obs = [np.asarray(g, dtype=np.float64) for g in groups_obs]
    if len(groups_obs) < 2 or any(len(g) < 2 for g in groups_obs):
        raise ValueError("need >= 2 groups with >= 2 observations each")
    labels = list(labels) if labels is not None else list(range(len(groups_obs)))
    k = len(groups_obs)
    means = np.array([g.mean() for g in groups_obs])
    ns = np.array([len(g) for g in groups_obs])
    df = int(ns.sum() - k)
    ssw = sum(((g - g.mean()) ** 2).sum() for g in groups_obs)
    msw = ssw / df
    p = np.ones((k, k))
    for i in range(k):
        for j in range(i + 1, k):
            diff = abs(means[i] - means[j])
            if msw == 0:
                pij = 1.0 if diff == 0 else 0.0
            else:
                se = np.sqrt(msw / 2 * (1 / ns[i] + 1 / ns[j]))
                q = diff / se
                pij = float(sps.studentized_range.sf(q, k, df))
            p[i, j] = p[j, i] = pij
    return TukeyResult(labels, p, p < alpha, alpha)


def silverman_bandwidth(samples: np.ndarray) -> float:
    """0.9 * min(std, IQR / 1.34) * n^(-1/5), with a floor for degenerate
    spreads."""
    n = len(samples)
    std = samples.std(ddof=1) if n > 1 else 0.0
    q75, q25 = np.percentile(samples, [75, 25])
    iqr = q75 - q25
    spread_candidates = [v for v in (std, iqr / 1.34) if v > 0]
    spread = min(spread_candidates) if spread_candidates else 1.0
    return 0.9 * spread * n ** (-0.2)


@dataclass
class DriftReport:
    partitions: list
    classes: list
    mean_flowpics: dict  # (partition, class) -> resolution x resolution matrix
    kde_grid: np.ndarray
    kdes: dict = field(default_factory=dict)  # (partition, class) -> density


def drift_diagnostics(partitioned: dict[str, Dataset], resolution: int = 32,
                      window: float = 15.0, grid_points: int = 256) -> DriftReport:
    """Per (partition, class): elementwise-mean flowpic and a Gaussian KDE
    of packet sizes on a fixed 0..1500 grid."""
    if not partitioned:
        raise ValueError("need at least one partition")
    classes = sorted({c for d in partitioned.values() for c in d.labels})
    grid = np.linspace(0, MAX_PACKET_SIZE, grid_points)
    mean_flowpics = {}
    kdes = {}
    for pname, dataset in partitioned.items():
        for cls in classes:
            idx = dataset.class_index.get(cls, [])
            if not idx:
                warnings.warn(f"partition {pname!r}: class {cls!r} empty, skipped")
                continue
            acc = np.zeros((resolution, resolution))
            sizes = []
            for i in idx:
                rec = dataset.records[i]
                acc += build_flowpic(rec.series, resolution, window).counts
                sizes.append(rec.series.sizes)
            mean_flowpics[(pname, cls)] = acc / len(idx)
            allsizes = np.concatenate(sizes).astype(np.float64)
            h = silverman_bandwidth(allsizes)
            # reflect at the 0 / 1500 boundaries so the density integrates
            # to 1 on the bounded support
            reflected = np.concatenate([
                allsizes, -allsizes, 2 * MAX_PACKET_SIZE - allsizes])
            diffs = (grid[:, None] - reflected[None, :]) / h
            density = np.exp(-0.5 * diffs**2).sum(axis=1)
            density /= len(allsizes) * h * np.sqrt(2 * np.pi)
            kdes[(pname, cls)] = density
    return DriftReport(sorted(partitioned), classes, mean_flowpics, grid, kdes)
