from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .corpus import LABELS


def confusion_matrix(gold, pred, n_classes: int = len(LABELS)) -> np.ndarray:
    """Counts indexed ``[gold, pred]``."""
    cm = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(cm, (np.asarray(gold, dtype=np.int64), np.asarray(pred, dtype=np.int64)), 1)
    return cm


def per_class_scores(cm: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Precision, recall and F1 per class; undefined ratios count as 0."""
    tp = np.diag(cm).astype(float)
    predicted = cm.sum(axis=0).astype(float)
    actual = cm.sum(axis=1).astype(float)
    precision = np.divide(tp, predicted, out=np.zeros_like(tp), where=predicted > 0)
    recall = np.divide(tp, actual, out=np.zeros_like(tp), where=actual > 0)
    denom = precision + recall
    f1 = np.divide(2 * precision * recall, denom, out=np.zeros_like(tp), where=denom > 0)
    return precision, recall, f1


def accuracy(cm: np.ndarray) -> float:
    total = cm.sum()
    return float(np.trace(cm) / total) if total else 0.0


def macro_f1(cm: np.ndarray) -> float:
    return float(per_class_scores(cm)[2].mean())


@dataclass
class EvalReport:
    accuracy: float
    macro_f1: float
    precision: list[float]
    recall: list[float]
    f1: list[float]
    confusion: list[list[int]]
    misclassified: list[dict] = field(default_factory=list)

    @classmethod
    def from_confusion(cls, cm: np.ndarray, misclassified=()) -> EvalReport:
        p, r, f = per_class_scores(cm)
        return cls(accuracy(cm), macro_f1(cm), p.tolist(), r.tolist(), f.tolist(),
                   cm.tolist(), list(misclassified))

    def to_json(self, with_errors: bool = True) -> dict:
        out = {"accuracy": self.accuracy, "macro_f1": self.macro_f1,
               "per_class": {lab: {"precision": self.precision[i], "recall": self.recall[i],
                                   "f1": self.f1[i]} for i, lab in enumerate(LABELS)},
               "confusion": self.confusion}
        if with_errors:
            out["misclassified"] = self.misclassified
        return out

    def to_text(self) -> str:
        lines = [f"accuracy  {100 * self.accuracy:6.2f}",
                 f"macro-F1  {100 * self.macro_f1:6.2f}",
                 "",
                 f"{'class':<10}{'prec':>8}{'recall':>8}{'F1':>8}"]
        for i, lab in enumerate(LABELS):
            lines.append(f"{lab:<10}{100 * self.precision[i]:8.2f}{100 * self.recall[i]:8.2f}"
                         f"{100 * self.f1[i]:8.2f}")
        lines += ["", "confusion (rows gold, cols predicted): " + " ".join(LABELS)]
        lines += ["  " + " ".join(f"{c:6d}" for c in row) for row in self.confusion]
        lines.append(f"misclassified: {len(self.misclassified)}")
        return "\n".join(lines) + "\n"
