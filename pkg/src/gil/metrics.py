"""Classification metrics, imputation error and Pearson correlation."""

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.special import betainc
from scipy.stats import rankdata

THRESHOLD = 0.5


class UndefinedMetric(ValueError):
    pass


@dataclass(frozen=True)
class EvalResult:
    accuracy: float
    auc: Optional[float]
    average_precision: Optional[float]
    n: int
    loss: Optional[float] = None


def accuracy(scores, labels):
    """Binary scores use ``score >= 0.5``; 2-D class probabilities use argmax."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if labels.size == 0:
        raise UndefinedMetric("accuracy of an empty set")
    if scores.ndim == 2:
        pred = scores.argmax(axis=1)
    else:
        pred = (scores >= THRESHOLD).astype(np.int64)
    return float(np.mean(pred == labels))


def _check_binary(labels):
    labels = np.asarray(labels)
    n_pos = int(np.sum(labels == 1))
    if n_pos == 0 or n_pos == labels.size:
        raise UndefinedMetric("both classes must be present")
    return labels == 1


def roc_auc(scores, labels):
    """P(random positive outranks random negative), ties counted one half."""
    pos = _check_binary(labels)
    ranks = rankdata(np.asarray(scores, dtype=np.float64))
    n_pos, n_neg = pos.sum(), (~pos).sum()
    u = ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def average_precision(scores, labels):
    """Sum over distinct descending thresholds of (R_k - R_{k-1}) * P_k."""
    pos = _check_binary(labels)
    scores = np.asarray(scores, dtype=np.float64)
    order = np.argsort(-scores, kind="mergesort")
    s, hits = scores[order], pos[order].astype(np.float64)
    tp = np.cumsum(hits)
    # keep the last index of each run of tied scores
    last = np.r_[np.flatnonzero(np.diff(s) != 0), len(s) - 1]
    tp_k = tp[last]
    precision = tp_k / (last + 1)
    recall = tp_k / pos.sum()
    prev = np.r_[0.0, recall[:-1]]
    return float(np.sum((recall - prev) * precision))


def evaluate(probs, labels, loss=None):
    """Accuracy for any task; AUC/AP only for binary tasks with both classes."""
    probs = np.asarray(probs, dtype=np.float64)
    labels = np.asarray(labels)
    auc = ap = None
    if probs.ndim == 2 and probs.shape[1] == 2:
        scores = probs[:, 1]
        acc = accuracy(scores, labels)
        try:
            auc, ap = roc_auc(scores, labels), average_precision(scores, labels)
        except UndefinedMetric:
            pass
    else:
        acc = accuracy(probs, labels)
    return EvalResult(acc, auc, ap, int(labels.size), loss)


def imputation_mse(imputed, truth, mask):
    """Mean squared error over missing entries (``mask == 0``) only.

    Accepts arrays, or lists of per-sequence arrays.
    """
    if isinstance(imputed, list):
        imputed, truth, mask = (np.concatenate(v) for v in (imputed, truth, mask))
    missing = np.asarray(mask) == 0
    if not missing.any():
        raise UndefinedMetric("no missing entries to score")
    diff = np.asarray(imputed)[missing] - np.asarray(truth)[missing]
    return float(np.mean(diff * diff))


def pearson(xs, ys):
    """Pearson r and its two-sided p-value from the Student-t distribution (n - 2 dof).

    For n < 5 the p-value is returned but has little meaning.
    """
    x = np.asarray(xs, dtype=np.float64)
    y = np.asarray(ys, dtype=np.float64)
    n = x.size
    if n < 3 or y.size != n:
        raise UndefinedMetric("pearson needs at least 3 paired points")
    xc, yc = x - x.mean(), y - y.mean()
    sxx, syy = np.dot(xc, xc), np.dot(yc, yc)
    if sxx == 0 or syy == 0:
        raise UndefinedMetric("zero variance")
    r = float(np.clip(np.dot(xc, yc) / np.sqrt(sxx * syy), -1.0, 1.0))
    dof = n - 2
    if abs(r) == 1.0:
        return r, 0.0
    t2 = r * r * dof / (1.0 - r * r)
    # two-sided tail of Student t: I_{dof/(dof+t^2)}(dof/2, 1/2)
    p = float(betainc(dof / 2.0, 0.5, dof / (dof + t2)))
    return r, p
