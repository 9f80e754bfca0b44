"""ROC AUC and zoom precision/recall."""

import json

import numpy as np
from scipy.stats import rankdata

from .errors import DegenerateInputError, UsageError


def roc_auc(scores, labels):
    """Mann-Whitney AUC from tie-averaged ranks; tied pairs count one half."""
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels)
    if s.shape != y.shape or s.ndim != 1:
        raise UsageError(f"scores {s.shape} and labels {y.shape} must be equal-length vectors")
    if not np.all((y == 0) | (y == 1)):
        raise UsageError("labels must be binary")
    n_pos = int(y.sum())
    n_neg = y.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise DegenerateInputError(f"AUC needs both classes, got {n_pos} positive / {n_neg} negative")
    ranks = rankdata(s, method="average")
    u = ranks[y == 1].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def pairwise_auc(scores, labels):
    """O(P*N) reference: fraction of positive/negative pairs ranked correctly."""
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels)
    pos, neg = s[y == 1], s[y == 0]
    if pos.size == 0 or neg.size == 0:
        raise DegenerateInputError("AUC needs both classes")
    diff = pos[:, None] - neg[None, :]
    return float(((diff > 0) + 0.5 * (diff == 0)).mean())


def zoom_pr(predicted, truth):
    """Precision and recall of zoom decisions; an empty denominator gives 1.0."""
    p = np.asarray(predicted, dtype=bool)
    t = np.asarray(truth, dtype=bool)
    if p.shape != t.shape:
        raise UsageError(f"{p.size} predictions for {t.size} labels")
    tp = int(np.sum(p & t))
    fp = int(np.sum(p & ~t))
    fn = int(np.sum(~p & t))
    precision = tp / (tp + fp) if tp + fp else 1.0
    recall = tp / (tp + fn) if tp + fn else 1.0
    return precision, recall


def format_metrics(metrics):
    """``key=value`` lines for the scalar entries, in key order."""
    lines = []
    for key in sorted(metrics):
        v = metrics[key]
        if isinstance(v, float):
            lines.append(f"{key}={v:.6f}")
        elif isinstance(v, (int, str)):
            lines.append(f"{key}={v}")
    return "\n".join(lines)


def write_report(metrics, path):
    with open(path, "w") as fh:
        json.dump(metrics, fh, indent=2, sort_keys=True)
        fh.write("\n")
