"""Multi-label ranking metrics and frequency-bucketed aggregation.

ROC AUC is the Mann-Whitney statistic computed by rank summation with
tie-averaged ranks; PR AUC is average precision over a stable descending
sort (ties keep original order). Labels with a single class present are
"degenerate": they are excluded from macro averages and counted.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateLabelError, InputError

BUCKET_EDGES = ((1, 10), (10, 51), (51, 101), (101, None))


def _bucket_name(lo: int, hi: int | None) -> str:
    return f"[{lo},{hi})" if hi is not None else f"[{lo},inf)"


BUCKET_NAMES = tuple(_bucket_name(lo, hi) for lo, hi in BUCKET_EDGES)


def _tied_ranks(values: np.ndarray) -> np.ndarray:
    """1-based ranks, ties averaged."""
    order = np.argsort(values, kind="stable")
    ranks = np.empty(len(values), dtype=np.float64)
    i = 0
    while i < len(values):
        j = i
        while j + 1 < len(values) and values[order[j + 1]] == values[order[i]]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def roc_auc(scores, labels) -> float:
    """(concordant + 0.5 * tied) / (P * N) via rank summation."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise InputError("scores and labels must be equal-length 1-d sequences")
    pos = labels == 1
    n_pos = int(pos.sum())
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise DegenerateLabelError(f"need both classes, got {n_pos} positives of {len(labels)}")
    ranks = _tied_ranks(scores)
    u = ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def pr_auc(scores, labels) -> float:
    """Average precision: mean of precision at each positive's rank."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise InputError("scores and labels must be equal-length 1-d sequences")
    n_pos = int((labels == 1).sum())
    if n_pos == 0:
        raise DegenerateLabelError("average precision needs at least one positive")
    order = np.argsort(-scores, kind="stable")
    hits = 0
    total = 0.0
    for rank, idx in enumerate(order, start=1):
        if labels[idx] == 1:
            hits += 1
            total += hits / rank
    return total / n_pos


def micro_roc_auc(score_matrix, label_matrix) -> float:
    """Flatten all (document, label) cells into one ranking problem."""
    scores = np.asarray(score_matrix, dtype=np.float64)
    labels = np.asarray(label_matrix)
    if scores.shape != labels.shape:
        raise InputError("score and label matrices must have the same shape")
    return roc_auc(scores.ravel(), labels.ravel())


def bucketed_macro(per_label_auc, label_train_freq) -> dict[str, float]:
    """Mean per-label AUC per train-frequency bucket.

    ``per_label_auc`` entries of None (degenerate labels) are skipped;
    empty buckets are absent from the result.
    """
    freq = np.asarray(label_train_freq)
    if len(freq) != len(per_label_auc):
        raise InputError("need one train frequency per label")
    out: dict[str, float] = {}
    for (lo, hi), name in zip(BUCKET_EDGES, BUCKET_NAMES):
        vals = [
            auc
            for auc, f in zip(per_label_auc, freq)
            if auc is not None and f >= lo and (hi is None or f < hi)
        ]
        if vals:
            out[name] = float(np.mean(vals))
    return out


@dataclass
class MetricReport:
    roc_auc_macro: float | None
    roc_auc_micro: float | None
    pr_auc_macro: float | None
    per_label: dict[str, dict[str, float | None]]
    buckets: dict[str, float]
    excluded_degenerate: int

    def to_json(self) -> dict:
        return {
            "roc_auc_macro": self.roc_auc_macro,
            "roc_auc_micro": self.roc_auc_micro,
            "pr_auc_macro": self.pr_auc_macro,
            "per_label": self.per_label,
            "buckets": self.buckets,
            "excluded_degenerate": self.excluded_degenerate,
        }


def evaluate_scores(
    score_matrix,
    label_matrix,
    label_names,
    label_train_freq=None,
) -> MetricReport:
    """Full metric report for a (n_docs, n_labels) score matrix."""
    scores = np.asarray(score_matrix, dtype=np.float64)
    y = np.asarray(label_matrix)
    if scores.shape != y.shape:
        raise InputError("score and label matrices must have the same shape")
    if scores.shape[1] != len(label_names):
        raise InputError("need one name per label column")

    per_label: dict[str, dict[str, float | None]] = {}
    roc_vals: list[float | None] = []
    pr_vals: list[float | None] = []
    excluded = 0
    for c, name in enumerate(label_names):
        try:
            r = roc_auc(scores[:, c], y[:, c])
        except DegenerateLabelError:
            r = None
        try:
            p = pr_auc(scores[:, c], y[:, c])
        except DegenerateLabelError:
            p = None
        if r is None:
            excluded += 1
        roc_vals.append(r)
        pr_vals.append(p)
        per_label[name] = {"roc_auc": r, "pr_auc": p}

    included_roc = [v for v in roc_vals if v is not None]
    included_pr = [v for v in pr_vals if v is not None]
    try:
        micro = micro_roc_auc(scores, y)
    except DegenerateLabelError:
        micro = None

    buckets = {}
    if label_train_freq is not None:
        buckets = bucketed_macro(roc_vals, label_train_freq)

    return MetricReport(
        roc_auc_macro=float(np.mean(included_roc)) if included_roc else None,
        roc_auc_micro=micro,
        pr_auc_macro=float(np.mean(included_pr)) if included_pr else None,
        per_label=per_label,
        buckets=buckets,
        excluded_degenerate=excluded,
    )
