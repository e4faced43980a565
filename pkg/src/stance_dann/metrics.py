"""Evaluation: accuracy, per-class and macro F1, and the two-level weighted
accuracy used by the Fake News Challenge scorer.

The weighted score gives 0.25 per example whose related/unrelated side is
right and a further 0.75 when a related example's exact stance is right,
normalized by the maximum attainable score on the gold labels.
"""

from __future__ import annotations

import numpy as np

FNC_CLASSES = ("agree", "disagree", "discuss", "unrelated")


def _check_lists(gold, pred) -> None:
    if len(gold) != len(pred):
        raise ValueError(f"length mismatch: {len(gold)} gold vs {len(pred)} predicted")
    if not gold:
        raise ValueError("nothing to score")


class ConfusionMatrix:
    """Square count matrix, rows = gold class, columns = predicted class."""

    def __init__(self, classes: tuple[str, ...] = FNC_CLASSES):
        self.classes = tuple(classes)
        self.counts = np.zeros((len(classes), len(classes)), dtype=np.int64)

    @classmethod
    def from_predictions(cls, gold, pred, classes: tuple[str, ...] = FNC_CLASSES):
        cm = cls(classes)
        _check_lists(gold, pred)
        index = {c: i for i, c in enumerate(cm.classes)}
        for g, p in zip(gold, pred):
            if g not in index:
                raise ValueError(f"unknown gold label {g!r}")
            if p not in index:
                raise ValueError(f"unknown predicted label {p!r}")
            cm.counts[index[g], index[p]] += 1
        return cm

    @property
    def total(self) -> int:
        return int(self.counts.sum())


def accuracy(gold: list[str], pred: list[str]) -> float:
    _check_lists(gold, pred)
    return sum(g == p for g, p in zip(gold, pred)) / len(gold)


def macro_f1(
    gold: list[str], pred: list[str], classes: tuple[str, ...] = FNC_CLASSES
) -> tuple[float, list[float]]:
    """Unweighted mean of per-class F1 over a fixed class list.

    A class absent from both gold and predictions scores 0 (the 0/0
    convention), so macro-F1 always averages over len(classes) terms.
    """
    _check_lists(gold, pred)
    per_class = []
    for c in classes:
        tp = sum(1 for g, p in zip(gold, pred) if g == c and p == c)
        fp = sum(1 for g, p in zip(gold, pred) if g != c and p == c)
        fn = sum(1 for g, p in zip(gold, pred) if g == c and p != c)
        precision = tp / (tp + fp) if tp + fp else 0.0
        recall = tp / (tp + fn) if tp + fn else 0.0
        f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
        per_class.append(f1)
    return sum(per_class) / len(per_class), per_class


def fnc_weighted_accuracy(gold: list[str], pred: list[str]) -> float:
    """Two-level score normalized by the best score attainable on `gold`."""
    _check_lists(gold, pred)
    score = 0.0
    best = 0.0
    for g, p in zip(gold, pred):
        g_related = g != "unrelated"
        p_related = p != "unrelated"
        if g_related == p_related:
            score += 0.25
            if g_related and g == p:
                score += 0.75
        best += 1.0 if g_related else 0.25
    return score / best


def report_values(gold: list[str], pred: list[str]) -> dict:
    """All scorer outputs at full precision, for the machine-readable sidecar."""
    macro, per_class = macro_f1(gold, pred)
    return {
        "weighted_accuracy": fnc_weighted_accuracy(gold, pred),
        "accuracy": accuracy(gold, pred),
        "macro_f1": macro,
        "per_class_f1": dict(zip(FNC_CLASSES, per_class)),
        "n_examples": len(gold),
    }


def format_report(values: dict) -> str:
    """One row in column order: weighted accuracy, accuracy, macro-F1, per-class F1."""
    per_class = "/".join(
        f"{values['per_class_f1'][c]:.3f}" for c in FNC_CLASSES
    )
    return (
        f"{values['weighted_accuracy']:.3f} {values['accuracy']:.3f} "
        f"{values['macro_f1']:.3f} {per_class}"
    )
