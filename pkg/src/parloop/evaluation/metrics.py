"""Confusion matrices and binary classification metrics (positive class = Parallelizable)."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from ..errors import LengthMismatchError

CLASS_NAMES = ("Undefined", "Parallelizable")


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int
    tn: int
    fp: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.tn + self.fp + self.fn

    def as_array(self) -> np.ndarray:
        """Rows are true labels, columns predictions, class 0 first."""
        return np.array([[self.tn, self.fp], [self.fn, self.tp]], dtype=np.int64)

    def to_json(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class MetricSet:
    accuracy: float
    precision: float
    recall: float
    f1: float
    fpr: float
    undefined: tuple = field(default=())  # names of metrics that hit 0/0

    def to_json(self) -> dict:
        d = asdict(self)
        d["undefined"] = list(self.undefined)
        return d


def confusion(predictions, labels) -> ConfusionMatrix:
    p = np.asarray(predictions).astype(np.int64).ravel()
    y = np.asarray(labels).astype(np.int64).ravel()
    if p.shape != y.shape:
        raise LengthMismatchError(f"{len(p)} predictions for {len(y)} labels")
    return ConfusionMatrix(
        tp=int(((p == 1) & (y == 1)).sum()),
        tn=int(((p == 0) & (y == 0)).sum()),
        fp=int(((p == 1) & (y == 0)).sum()),
        fn=int(((p == 0) & (y == 1)).sum()),
    )


def _ratio(num: float, den: float, name: str, flags: list) -> float:
    if den == 0:
        flags.append(name)
        return 0.0
    return num / den


def metrics(m: ConfusionMatrix) -> MetricSet:
    """Accuracy, precision, recall, F1 and false-positive rate; any 0/0 is reported as 0 and flagged."""
    flags: list[str] = []
    acc = _ratio(m.tp + m.tn, m.total, "accuracy", flags)
    prec = _ratio(m.tp, m.tp + m.fp, "precision", flags)
    rec = _ratio(m.tp, m.tp + m.fn, "recall", flags)
    f1 = _ratio(2 * prec * rec, prec + rec, "f1", flags)
    fpr = _ratio(m.fp, m.fp + m.tn, "fpr", flags)
    return MetricSet(acc, prec, rec, f1, fpr, tuple(flags))


def class_report(m: ConfusionMatrix) -> list[dict]:
    """Per-class precision, recall, F1 and support, class 0 first."""
    flags: list[str] = []
    rows = []
    for name, tp, fp, fn in (
        (CLASS_NAMES[0], m.tn, m.fn, m.fp),
        (CLASS_NAMES[1], m.tp, m.fp, m.fn),
    ):
        p = _ratio(tp, tp + fp, "precision", flags)
        r = _ratio(tp, tp + fn, "recall", flags)
        rows.append({"class": name, "precision": p, "recall": r,
                     "f1": _ratio(2 * p * r, p + r, "f1", flags), "support": tp + fn})
    return rows


def format_class_report(m: ConfusionMatrix) -> str:
    lines = [f"{'':<16}{'precision':>10}{'recall':>10}{'f1-score':>10}{'support':>10}"]
    for row in class_report(m):
        lines.append(
            f"{row['class']:<16}{row['precision']:>10.4f}{row['recall']:>10.4f}"
            f"{row['f1']:>10.4f}{row['support']:>10d}"
        )
    lines.append(f"{'accuracy':<16}{'':>10}{'':>10}{metrics(m).accuracy:>10.4f}{m.total:>10d}")
    return "\n".join(lines) + "\n"
