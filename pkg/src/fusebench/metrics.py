"""Precision / recall / F1 over multilabel prediction sets.

Zero-denominator precision and recall are defined as 0, except that a
sample whose prediction set and truth set are both empty scores a
perfect F1 of 1.0 (predicting "no labels" correctly is a correct
prediction).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "AVERAGINGS",
    "ConfusionCounts",
    "confusion_counts",
    "f1_sample",
    "mean_f1",
    "threshold_sets",
]

AVERAGINGS = ("samples", "macro", "micro")


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    fn: int


def confusion_counts(pred_set, truth_set, num_classes: int) -> ConfusionCounts:
    pred = set(int(k) for k in pred_set)
    truth = set(int(k) for k in truth_set)
    for k in pred | truth:
        if not 0 <= k < num_classes:
            raise IndexError(f"class index {k} out of range [0, {num_classes})")
    tp = len(pred & truth)
    return ConfusionCounts(tp=tp, fp=len(pred) - tp, fn=len(truth) - tp)


def f1_sample(counts: ConfusionCounts) -> float:
    if counts.tp == 0 and counts.fp == 0 and counts.fn == 0:
        return 1.0
    precision = counts.tp / (counts.tp + counts.fp) if counts.tp + counts.fp else 0.0
    recall = counts.tp / (counts.tp + counts.fn) if counts.tp + counts.fn else 0.0
    if precision + recall == 0.0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def mean_f1(preds, truths, averaging: str = "samples", num_classes: int | None = None) -> float:
    """Mean F1 over prediction/truth set pairs.

    samples: mean of the per-sample F1 (the default reported everywhere);
    macro: per-class F1 from class-wise counts, averaged over classes;
    micro: one F1 from globally pooled counts.  num_classes defaults to
    1 + the largest index present (macro needs the full class count).
    """
    if len(preds) != len(truths):
        raise ValueError(f"got {len(preds)} predictions but {len(truths)} truths")
    if len(preds) == 0:
        raise ValueError("need at least one sample")
    if averaging not in AVERAGINGS:
        raise ValueError(f"averaging must be one of {AVERAGINGS}, got {averaging!r}")
    if num_classes is None:
        top = max((max(s, default=-1) for s in list(preds) + list(truths)), default=-1)
        num_classes = int(top) + 1 if top >= 0 else 1

    if averaging == "samples":
        total = 0.0
        for p, t in zip(preds, truths):
            total += f1_sample(confusion_counts(p, t, num_classes))
        return total / len(preds)

    tp = np.zeros(num_classes, dtype=np.int64)
    fp = np.zeros(num_classes, dtype=np.int64)
    fn = np.zeros(num_classes, dtype=np.int64)
    for p, t in zip(preds, truths):
        pset = set(int(k) for k in p)
        tset = set(int(k) for k in t)
        for k in pset | tset:
            if not 0 <= k < num_classes:
                raise IndexError(f"class index {k} out of range [0, {num_classes})")
        for k in pset & tset:
            tp[k] += 1
        for k in pset - tset:
            fp[k] += 1
        for k in tset - pset:
            fn[k] += 1

    if averaging == "macro":
        scores = [
            f1_sample(ConfusionCounts(int(tp[k]), int(fp[k]), int(fn[k])))
            for k in range(num_classes)
        ]
        return float(sum(scores) / num_classes)

    pooled = ConfusionCounts(int(tp.sum()), int(fp.sum()), int(fn.sum()))
    return f1_sample(pooled)


def threshold_sets(probs: np.ndarray, threshold) -> list[set[int]]:
    """Class k is predicted for a row iff probs[row, k] >= threshold_k.

    threshold is a scalar or a per-class vector of length K; the
    comparison is inclusive, so a probability exactly at the threshold
    counts as predicted.
    """
    probs = np.asarray(probs)
    thr = np.asarray(threshold, dtype=probs.dtype)
    if thr.ndim == 0:
        thr = np.full(probs.shape[1], float(thr), dtype=probs.dtype)
    if thr.shape != (probs.shape[1],):
        raise ValueError(f"threshold vector must have length {probs.shape[1]}, got {thr.shape}")
    hits = probs >= thr
    return [set(np.flatnonzero(row).tolist()) for row in hits]
