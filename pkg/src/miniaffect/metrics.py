"""Evaluation metrics and report assembly: Pearson r, accuracy, macro F1,
confusion matrices, JSON/CSV emission."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .data import EMOTIONS, Dataset, class_histogram, emotion_id
from .errors import ValidationError
from .predictions import ClassificationPredictions, RegressionPredictions


def pearson(x, y) -> float:
    """Sample Pearson correlation, n-denominator on both covariance and sigmas.

    Raises on vectors shorter than 2 and on constant vectors: a degenerate
    variance usually means a collapsed model and should never read as r = 0.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise ValidationError(f"length mismatch: {x.shape} vs {y.shape}")
    if x.ndim != 1 or x.size < 2:
        raise ValidationError("pearson needs two 1-d vectors of length >= 2")
    dx = x - x.mean()
    dy = y - y.mean()
    sx = np.sqrt((dx * dx).sum())
    sy = np.sqrt((dy * dy).sum())
    if sx == 0.0 or sy == 0.0:
        raise ValidationError("pearson undefined: input vector is constant")
    return float((dx * dy).sum() / (sx * sy))


def accuracy(preds, golds) -> float:
    preds = np.asarray(preds)
    golds = np.asarray(golds)
    if preds.shape != golds.shape or preds.size == 0:
        raise ValidationError(f"bad label vectors: {preds.shape} vs {golds.shape}")
    return float((preds == golds).mean())


def _check_labels(preds: np.ndarray, golds: np.ndarray, k: int) -> None:
    if preds.shape != golds.shape or preds.size == 0:
        raise ValidationError(f"bad label vectors: {preds.shape} vs {golds.shape}")
    for name, arr in (("pred", preds), ("gold", golds)):
        if arr.min() < 0 or arr.max() >= k:
            raise ValidationError(f"{name} label outside 0..{k - 1}")


def macro_f1(preds, golds, k: int = 7) -> tuple[float, list[float]]:
    """Unweighted mean of per-class F1 over all k classes.

    Per class: precision = TP/(TP+FP), recall = TP/(TP+FN), F1 = 2PR/(P+R);
    every zero-denominator quantity is defined as 0, and classes absent from
    both preds and golds contribute an F1 of 0.
    """
    preds = np.asarray(preds)
    golds = np.asarray(golds)
    _check_labels(preds, golds, k)
    per_class = []
    for c in range(k):
        tp = int(((preds == c) & (golds == c)).sum())
        fp = int(((preds == c) & (golds != c)).sum())
        fn = int(((preds != c) & (golds == c)).sum())
        precision = tp / (tp + fp) if tp + fp else 0.0
        recall = tp / (tp + fn) if tp + fn else 0.0
        f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
        per_class.append(f1)
    return sum(per_class) / k, per_class


def confusion(preds, golds, k: int = 7) -> tuple[np.ndarray, np.ndarray]:
    """Counts matrix indexed [gold][pred] plus its row-normalized copy.

    Rows with no gold examples stay all-zero in the normalized matrix.
    """
    preds = np.asarray(preds)
    golds = np.asarray(golds)
    _check_labels(preds, golds, k)
    counts = np.zeros((k, k), dtype=np.int64)
    np.add.at(counts, (golds, preds), 1)
    row_sums = counts.sum(axis=1, keepdims=True)
    normalized = np.divide(counts, row_sums, out=np.zeros((k, k)), where=row_sums > 0)
    return counts, normalized


@dataclass
class EvalReport:
    task: str  # "regression" or "classification"
    n: int
    pearson_empathy: float | None = None
    pearson_distress: float | None = None
    pearson_avg: float | None = None
    accuracy: float | None = None
    macro_f1: float | None = None
    per_class_f1: list[float] | None = None
    confusion: list[list[int]] | None = None
    confusion_normalized: list[list[float]] | None = None

    def to_dict(self) -> dict:
        out: dict = {"task": self.task}
        for key in (
            "pearson_empathy",
            "pearson_distress",
            "pearson_avg",
            "accuracy",
            "macro_f1",
            "per_class_f1",
            "confusion",
            "confusion_normalized",
        ):
            value = getattr(self, key)
            if value is not None:
                out[key] = value
        out["n"] = self.n
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"


def _align(pred_ids: list[str], gold: Dataset) -> list:
    by_id = {r.id: r for r in gold.records}
    if len(pred_ids) != len(by_id):
        raise ValidationError(f"prediction count {len(pred_ids)} != gold count {len(by_id)}")
    records = []
    for pid in pred_ids:
        rec = by_id.get(pid)
        if rec is None:
            raise ValidationError(f"prediction id {pid!r} not present in gold data")
        records.append(rec)
    return records


def build_report(task: str, preds, gold: Dataset) -> EvalReport:
    """Score predictions against gold labels, aligned by record id."""
    if task == "regression":
        if not isinstance(preds, RegressionPredictions):
            raise ValidationError("regression evaluation needs regression predictions")
        records = _align(preds.ids, gold)
        report = EvalReport(task="regression", n=len(records))
        if preds.empathy is not None:
            golds = _gold_scores(records, "empathy")
            report.pearson_empathy = pearson(preds.empathy, golds)
        if preds.distress is not None:
            golds = _gold_scores(records, "distress")
            report.pearson_distress = pearson(preds.distress, golds)
        if report.pearson_empathy is not None and report.pearson_distress is not None:
            report.pearson_avg = (report.pearson_empathy + report.pearson_distress) / 2.0
        if report.pearson_empathy is None and report.pearson_distress is None:
            raise ValidationError("prediction file has neither empathy nor distress columns")
        return report

    if task == "classification":
        if not isinstance(preds, ClassificationPredictions):
            raise ValidationError("classification evaluation needs classification predictions")
        records = _align(preds.ids, gold)
        gold_labels = []
        for rec in records:
            if rec.emotion is None:
                raise ValidationError(f"gold record {rec.id!r} has no emotion label")
            gold_labels.append(emotion_id(rec.emotion))
        pred_labels = [emotion_id(label) for label in preds.labels]
        macro, per_class = macro_f1(pred_labels, gold_labels)
        counts, normalized = confusion(pred_labels, gold_labels)
        return EvalReport(
            task="classification",
            n=len(records),
            accuracy=accuracy(pred_labels, gold_labels),
            macro_f1=macro,
            per_class_f1=per_class,
            confusion=counts.tolist(),
            confusion_normalized=normalized.tolist(),
        )

    raise ValidationError(f"unknown evaluation task {task!r} (expected regression or classification)")


def _gold_scores(records, field: str) -> list[float]:
    values = []
    for rec in records:
        value = getattr(rec, field)
        if value is None:
            raise ValidationError(f"gold record {rec.id!r} has no {field} score")
        values.append(value)
    return values


def confusion_csv(matrix) -> str:
    lines = ["gold," + ",".join(EMOTIONS)]
    for label, row in zip(EMOTIONS, matrix):
        lines.append(label + "," + ",".join(repr(float(v)) if isinstance(v, float) else str(v) for v in row))
    return "\n".join(lines) + "\n"


def histogram_csv(gold: Dataset) -> str:
    hist = class_histogram(gold)
    lines = ["class,count"]
    lines.extend(f"{label},{hist[label]}" for label in EMOTIONS)
    return "\n".join(lines) + "\n"
