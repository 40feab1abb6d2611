"""Fold reports, best/worst model selection and the on-disk report bundle."""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from pathlib import Path

from ..classifier.training import TrainingHistory
from ..errors import ParloopError
from .metrics import ConfusionMatrix, MetricSet, format_class_report, metrics
from .stats import boxplot_data, histogram_data, summarize

SELECTIONS = ("best_val", "worst_val", "best_fpr", "worst_fpr")


@dataclass
class FoldReport:
    fold: int
    history: TrainingHistory
    confusion: ConfusionMatrix
    train_acc: float
    val_acc: float
    test_acc: float
    val_loss: float  # of the restored checkpoint
    checkpoint: str | None = None
    best_epoch: int = 0
    metrics: MetricSet = field(init=False)

    def __post_init__(self):
        self.metrics = metrics(self.confusion)

    def to_json(self) -> dict:
        return {
            "fold": self.fold,
            "confusion": self.confusion.to_json(),
            "metrics": self.metrics.to_json(),
            "train_acc": self.train_acc,
            "val_acc": self.val_acc,
            "test_acc": self.test_acc,
            "val_loss": self.val_loss,
            "checkpoint": self.checkpoint,
            "best_epoch": self.best_epoch,
            "history": {
                "train_loss": self.history.train_loss,
                "val_loss": self.history.val_loss,
                "train_acc": self.history.train_acc,
                "val_acc": self.history.val_acc,
                "lr": self.history.lr,
                "best_epoch": self.history.best_epoch,
                "stopped_early": self.history.stopped_early,
            },
        }

    @classmethod
    def from_json(cls, d: dict) -> "FoldReport":
        h = d["history"]
        hist = TrainingHistory(h["train_loss"], h["val_loss"], h["train_acc"], h["val_acc"], h["lr"],
                               h.get("best_epoch", 0), h.get("stopped_early", False))
        return cls(d["fold"], hist, ConfusionMatrix(**d["confusion"]), d["train_acc"], d["val_acc"],
                   d["test_acc"], d["val_loss"], d.get("checkpoint"), d.get("best_epoch", 0))


def select_models(reports) -> dict[str, FoldReport]:
    """Lowest/highest validation loss and FPR; ties go to the lowest fold index."""
    if not reports:
        raise ParloopError("no fold reports to select from")
    ordered = sorted(reports, key=lambda r: r.fold)

    def pick(key, highest):
        best = ordered[0]
        for r in ordered[1:]:
            if (key(r) > key(best)) if highest else (key(r) < key(best)):
                best = r
        return best

    return {
        "best_val": pick(lambda r: r.val_loss, False),
        "worst_val": pick(lambda r: r.val_loss, True),
        "best_fpr": pick(lambda r: r.metrics.fpr, False),
        "worst_fpr": pick(lambda r: r.metrics.fpr, True),
    }


# --------------------------------------------------------------- formatting

SUMMARY_TABLES = {
    "summary_accuracy": (("Training", "train_acc"), ("Validation", "val_acc"), ("Test", "test_acc")),
    "summary_prf": (("Precision", "precision"), ("Recall", "recall"), ("F1-Score", "f1")),
    "summary_valloss": (("Validation loss", "val_loss"),),
    "summary_fpr": (("FPR", "fpr"),),
}


def metric_values(reports, key: str) -> list[float]:
    out = []
    for r in sorted(reports, key=lambda r: r.fold):
        if hasattr(r.metrics, key) and key != "accuracy":
            out.append(float(getattr(r.metrics, key)))
        else:
            out.append(float(getattr(r, key)))
    return out


def summary_rows(reports, table: str) -> list[dict]:
    rows = []
    for title, key in SUMMARY_TABLES[table]:
        s = summarize(metric_values(reports, key))
        rows.append({"metric": title, "mean": s.mean, "sd": s.sd, "median": s.median,
                     "ci_low": s.ci_low, "ci_high": s.ci_high})
    return rows


def format_table(rows: list[dict], digits: int = 5) -> str:
    """Plain-text statistics table: one line per metric with mean, sd, median and the 95% CI."""
    head = f"{'Metric':<18}{'Mean':>10}{'SD':>10}{'Median':>10}  95% CI"
    lines = [head]
    for r in rows:
        lines.append(
            f"{r['metric']:<18}{r['mean']:>10.{digits}f}{r['sd']:>10.{digits}f}{r['median']:>10.{digits}f}"
            f"  [{r['ci_low']:.{digits}f}, {r['ci_high']:.{digits}f}]"
        )
    return "\n".join(lines) + "\n"


def _csv(rows: list[dict], columns: list[str]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=columns, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({c: (f"{r[c]:.10g}" if isinstance(r[c], float) else r[c]) for c in columns})
    return buf.getvalue()


def folds_csv(reports) -> str:
    cols = ["fold", "train_acc", "val_acc", "test_acc", "val_loss", "precision", "recall", "f1", "fpr",
            "tp", "tn", "fp", "fn", "best_epoch", "epochs_run"]
    rows = []
    for r in sorted(reports, key=lambda r: r.fold):
        m, c = r.metrics, r.confusion
        rows.append({"fold": r.fold, "train_acc": r.train_acc, "val_acc": r.val_acc, "test_acc": r.test_acc,
                     "val_loss": r.val_loss, "precision": m.precision, "recall": m.recall, "f1": m.f1,
                     "fpr": m.fpr, "tp": c.tp, "tn": c.tn, "fp": c.fp, "fn": c.fn,
                     "best_epoch": r.best_epoch, "epochs_run": len(r.history.train_loss)})
    return _csv(rows, cols)


def confusion_text(c: ConfusionMatrix) -> str:
    return (
        f"{'':<16}{'pred Undefined':>16}{'pred Parallel':>16}\n"
        f"{'true Undefined':<16}{c.tn:>16d}{c.fp:>16d}\n"
        f"{'true Parallel':<16}{c.fn:>16d}{c.tp:>16d}\n"
    )


# ------------------------------------------------------------------ writing


def emit_report(reports, out_dir, config_hash: str = "") -> dict[str, FoldReport]:
    """Write the report bundle under ``out_dir`` and return the model selection."""
    if not reports:
        raise ParloopError("no fold reports to emit")
    out = Path(out_dir)
    try:
        return _emit(sorted(reports, key=lambda r: r.fold), out, config_hash)
    except OSError as exc:
        raise ParloopError(f"cannot write report to {out}: {exc}") from exc


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")


def _emit(reports, out: Path, config_hash: str):
    cols = ["metric", "mean", "sd", "median", "ci_low", "ci_high"]
    tables = []
    for table, columns in SUMMARY_TABLES.items():
        rows = summary_rows(reports, table)
        _write(out / f"{table}.csv", _csv(rows, cols))
        tables.append(format_table(rows))
    _write(out / "tables.txt", "\n".join(tables))
    _write(out / "folds.csv", folds_csv(reports))
    _write(out / "folds.json", json.dumps([r.to_json() for r in reports], indent=1, sort_keys=True) + "\n")

    for table, columns in SUMMARY_TABLES.items():
        for _, key in columns:
            vals = metric_values(reports, key)
            _write(out / "plots" / f"boxplot_{key}.json", json.dumps(boxplot_data(vals), indent=1) + "\n")
            _write(out / "plots" / f"histogram_{key}.json", json.dumps(histogram_data(vals), indent=1) + "\n")

    chosen = select_models(reports)
    for name, r in chosen.items():
        d = out / "selected" / name
        _write(d / "training_curves.csv", r.history.to_csv())
        _write(d / "confusion_matrix.txt", confusion_text(r.confusion))
        _write(d / "confusion_matrix.json", json.dumps(r.confusion.to_json(), sort_keys=True) + "\n")
        _write(d / "classification_report.txt", format_class_report(r.confusion))
        _write(d / "fold.txt", f"{r.fold}\n")
    _write(out / "selection.json", json.dumps({k: v.fold for k, v in chosen.items()}, sort_keys=True) + "\n")
    _write(out / "config_hash.txt", config_hash + "\n")
    return chosen
