"""Binary-classification metrics: ranking scores, calibration error, and
confusion-derived bundles with explicit zero-denominator conventions.

All functions are pure and operate on one-dimensional numpy arrays (or
anything `np.asarray` accepts). Labels must be exactly 0 or 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ParameterError, UndefinedMetricError


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    fn: int
    tn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


@dataclass(frozen=True)
class ThresholdMetrics:
    """Confusion-derived metrics at one operating point."""

    accuracy: float
    precision: float
    recall: float
    specificity: float
    f1: float
    fbeta: float
    mcc: float
    beta: float


@dataclass(frozen=True)
class MetricBundle:
    """The full reported metric set: ranking, calibration, and operating point."""

    roc_auc: float
    pr_auc: float
    brier: float
    accuracy: float
    precision: float
    recall: float
    f1: float
    f2: float
    mcc: float
    specificity: float


def _check_binary(labels: np.ndarray) -> np.ndarray:
    y = np.asarray(labels)
    if y.ndim != 1:
        raise ParameterError("labels must be one-dimensional")
    if y.size and not np.isin(y, (0, 1)).all():
        raise ParameterError("labels must be 0/1")
    return y.astype(np.int64)


def roc_auc(scores, labels) -> float:
    """Area under the ROC curve via the Mann-Whitney statistic.

    Equals P(score_pos > score_neg) + 0.5 * P(tie), computed with midranks,
    so tied scores contribute half credit.
    """
    s = np.asarray(scores, dtype=float)
    y = _check_binary(labels)
    if s.shape != y.shape:
        raise ParameterError("scores and labels must have the same length")
    n_pos = int(y.sum())
    n_neg = y.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError("roc_auc needs both classes present")
    order = np.argsort(s, kind="mergesort")
    sorted_s = s[order]
    # midranks: tied values share the mean of their 1-based rank range
    starts = np.flatnonzero(np.r_[True, sorted_s[1:] != sorted_s[:-1]])
    ends = np.r_[starts[1:], s.size]
    midranks = (starts + ends + 1) / 2.0
    ranks = np.empty(s.size, dtype=float)
    ranks[order] = np.repeat(midranks, ends - starts)
    rank_sum_pos = float(ranks[y == 1].sum())
    return (rank_sum_pos - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def average_precision(scores, labels) -> float:
    """Average precision: sum of precision-at-cut times recall increment,
    with tied scores entering the cut together."""
    s = np.asarray(scores, dtype=float)
    y = _check_binary(labels)
    if s.shape != y.shape:
        raise ParameterError("scores and labels must have the same length")
    n_pos = int(y.sum())
    if n_pos == 0:
        raise UndefinedMetricError("average_precision needs at least one positive")
    order = np.argsort(-s, kind="mergesort")
    y_desc = y[order]
    s_desc = s[order]
    cum_tp = np.cumsum(y_desc)
    cut = np.flatnonzero(np.r_[s_desc[1:] != s_desc[:-1], True])
    tp_at_cut = cum_tp[cut]
    precision_at_cut = tp_at_cut / (cut + 1.0)
    tp_gain = np.diff(np.r_[0, tp_at_cut])
    return float((precision_at_cut * tp_gain).sum() / n_pos)


def brier(probs, labels) -> float:
    """Mean squared error of predicted probabilities against 0/1 outcomes."""
    p = np.asarray(probs, dtype=float)
    y = _check_binary(labels)
    if p.shape != y.shape:
        raise ParameterError("probs and labels must have the same length")
    if p.size == 0:
        raise ParameterError("brier needs at least one sample")
    if (p < 0).any() or (p > 1).any():
        raise ParameterError("probabilities must lie in [0, 1]")
    return float(np.mean((p - y) ** 2))


def confusion_at(probs, labels, t: float) -> ConfusionCounts:
    """Confusion counts when predicting positive for prob >= t (closed threshold)."""
    p = np.asarray(probs, dtype=float)
    y = _check_binary(labels)
    if p.shape != y.shape:
        raise ParameterError("probs and labels must have the same length")
    if not 0.0 <= t <= 1.0:
        raise ParameterError("threshold must lie in [0, 1]")
    pred = p >= t
    pos = y == 1
    tp = int(np.count_nonzero(pred & pos))
    fp = int(np.count_nonzero(pred & ~pos))
    fn = int(np.count_nonzero(~pred & pos))
    tn = int(np.count_nonzero(~pred & ~pos))
    return ConfusionCounts(tp=tp, fp=fp, fn=fn, tn=tn)


def fbeta_from_pr(precision: float, recall: float, beta: float) -> float:
    """F-beta from precision and recall; 0 when both are 0."""
    if beta <= 0:
        raise ParameterError("beta must be positive")
    denom = beta * beta * precision + recall
    if denom == 0.0:
        return 0.0
    return (1.0 + beta * beta) * precision * recall / denom


def classification_bundle(counts: ConfusionCounts, beta: float = 2.0) -> ThresholdMetrics:
    """All confusion-derived metrics at one operating point.

    Conventions for degenerate counts: precision is 0 when nothing was
    predicted positive; specificity is 0 when there are no negatives; MCC is
    0 when any marginal is empty. Recall with no positive labels is an error,
    not a convention: callers must not evaluate recall on positive-free data.
    """
    if beta <= 0:
        raise ParameterError("beta must be positive")
    tp, fp, fn, tn = counts.tp, counts.fp, counts.fn, counts.tn
    if min(tp, fp, fn, tn) < 0:
        raise ParameterError("confusion counts must be non-negative")
    total = counts.total
    if total == 0:
        raise ParameterError("confusion counts are all zero")
    if tp + fn == 0:
        raise UndefinedMetricError("recall undefined: no positive labels")
    precision = tp / (tp + fp) if tp + fp > 0 else 0.0
    recall = tp / (tp + fn)
    specificity = tn / (tn + fp) if tn + fp > 0 else 0.0
    accuracy = (tp + tn) / total
    f1 = fbeta_from_pr(precision, recall, 1.0)
    fbeta = fbeta_from_pr(precision, recall, beta)
    marginals = (tp + fp, tp + fn, tn + fp, tn + fn)
    if any(m == 0 for m in marginals):
        mcc = 0.0
    else:
        # exact integer numerator; the product of marginals can be huge
        mcc = (tp * tn - fp * fn) / math.sqrt(math.prod(marginals))
    return ThresholdMetrics(
        accuracy=accuracy,
        precision=precision,
        recall=recall,
        specificity=specificity,
        f1=f1,
        fbeta=fbeta,
        mcc=mcc,
        beta=beta,
    )


def threshold_curve(probs, labels, grid, beta: float = 2.0) -> list[tuple[float, float, float, float, float]]:
    """Rows of (t, precision, recall, f1, fbeta) over an ascending threshold grid."""
    g = np.asarray(grid, dtype=float)
    if g.ndim != 1 or g.size == 0:
        raise ParameterError("grid must be a non-empty 1-d sequence")
    if (np.diff(g) < 0).any():
        raise ParameterError("grid must be sorted ascending")
    rows = []
    for t in g:
        m = classification_bundle(confusion_at(probs, labels, float(t)), beta)
        rows.append((float(t), m.precision, m.recall, m.f1, m.fbeta))
    return rows


def full_bundle(probs, labels, threshold: float) -> MetricBundle:
    """MetricBundle combining ranking scores with the operating point at `threshold`."""
    counts = confusion_at(probs, labels, threshold)
    return bundle_from_parts(probs, labels, counts)


def bundle_from_parts(probs, labels, counts: ConfusionCounts) -> MetricBundle:
    """MetricBundle from probabilities plus an externally derived confusion matrix.

    Used when decisions were not made at a single global threshold (e.g. pooled
    out-of-fold decisions taken at per-fold thresholds).
    """
    m = classification_bundle(counts, beta=2.0)
    return MetricBundle(
        roc_auc=roc_auc(probs, labels),
        pr_auc=average_precision(probs, labels),
        brier=brier(probs, labels),
        accuracy=m.accuracy,
        precision=m.precision,
        recall=m.recall,
        f1=m.f1,
        f2=m.fbeta,
        mcc=m.mcc,
        specificity=m.specificity,
    )
