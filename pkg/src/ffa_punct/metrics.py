"""Precision / recall / F1 over punctuation labels."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import LABELS
from .exceptions import AlignmentError

PUNCT_CLASSES = (1, 2, 3)


def f1_score(precision: float, recall: float) -> float:
    if precision + recall == 0:
        return 0.0
    return 2 * precision * recall / (precision + recall)


def _ratio(num, den) -> float:
    return float(num / den) if den else 0.0


@dataclass
class MetricsReport:
    confusion: np.ndarray  # gold x predicted
    per_class: dict[str, tuple[float, float, float]]
    overall: tuple[float, float, float]
    average: str = "micro"

    @property
    def precision(self) -> float:
        return self.overall[0]

    @property
    def recall(self) -> float:
        return self.overall[1]

    @property
    def f1(self) -> float:
        return self.overall[2]

    @property
    def accuracy(self) -> float:
        total = self.confusion.sum()
        return _ratio(np.trace(self.confusion), total)

    def format_table(self) -> str:
        lines = [f"# overall aggregation: {self.average} over COMMA/PERIOD/QUESTION (O excluded)",
                 "label\tP\tR\tF1"]
        for name, (p, r, f) in self.per_class.items():
            lines.append(f"{name}\t{100 * p:.1f}\t{100 * r:.1f}\t{100 * f:.1f}")
        p, r, f = self.overall
        lines.append(f"OVERALL\t{100 * p:.1f}\t{100 * r:.1f}\t{100 * f:.1f}")
        return "\n".join(lines)


def compute_metrics(gold, predicted, average: str = "micro") -> MetricsReport:
    """One-vs-rest P/R/F1 for each mark, and an overall score that ignores O.

    ``average="micro"`` pools TP/FP/FN over the three marks; ``"macro"``
    averages the per-class P, R and F1.
    """
    gold = np.asarray(gold, dtype=np.int64).reshape(-1)
    predicted = np.asarray(predicted, dtype=np.int64).reshape(-1)
    if gold.shape != predicted.shape:
        raise AlignmentError(f"{gold.size} gold labels but {predicted.size} predictions")
    if average not in ("micro", "macro"):
        raise ValueError("average must be 'micro' or 'macro'")
    k = len(LABELS)
    confusion = np.bincount(gold * k + predicted, minlength=k * k).reshape(k, k)

    per_class = {}
    tp_sum = fp_sum = fn_sum = 0
    for c in PUNCT_CLASSES:
        tp = confusion[c, c]
        fp = confusion[:, c].sum() - tp
        fn = confusion[c, :].sum() - tp
        tp_sum, fp_sum, fn_sum = tp_sum + tp, fp_sum + fp, fn_sum + fn
        p, r = _ratio(tp, tp + fp), _ratio(tp, tp + fn)
        per_class[LABELS[c]] = (p, r, f1_score(p, r))

    if average == "micro":
        p, r = _ratio(tp_sum, tp_sum + fp_sum), _ratio(tp_sum, tp_sum + fn_sum)
        overall = (p, r, f1_score(p, r))
    else:
        overall = tuple(float(np.mean([scores[i] for scores in per_class.values()])) for i in range(3))
    return MetricsReport(confusion, per_class, overall, average)
