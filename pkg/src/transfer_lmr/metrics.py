"""Per-class AP, mAP, per-class and average class accuracy, overall accuracy."""
from __future__ import annotations

import csv
import io
import json
import math
import warnings
from dataclasses import asdict, dataclass

import numpy as np


@dataclass
class MetricsReport:
    class_names: list[str]
    per_class_ap: list[float | None]
    overall_map: float | None
    per_class_acc: list[float | None]
    avg_class_acc: float | None
    overall_acc: float
    confusion: list[list[int]]
    n_eval: int

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def table_row(self) -> dict[str, float | None]:
        """Per-class AP followed by the three summary columns, in percent."""
        row = {name: _pct(ap) for name, ap in zip(self.class_names, self.per_class_ap)}
        row["Overall mAP"] = _pct(self.overall_map)
        row["Avg. C/A"] = _pct(self.avg_class_acc)
        row["Overall Acc."] = _pct(self.overall_acc)
        return row

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["class", "ap", "accuracy", "n"])
        for j, name in enumerate(self.class_names):
            w.writerow([name, _fmt(self.per_class_ap[j]), _fmt(self.per_class_acc[j]),
                        sum(self.confusion[j])])
        w.writerow(["__summary__", _fmt(self.overall_map), _fmt(self.avg_class_acc), self.n_eval])
        w.writerow(["__overall_acc__", "", _fmt(self.overall_acc), self.n_eval])
        return buf.getvalue()


def _pct(v):
    return None if v is None else round(100.0 * v, 4)


def _fmt(v):
    return "" if v is None else repr(float(v))


def average_precision(scores, positives) -> float | None:
    """All-points AP: mean of precision@k over the ranks k of the positives.

    Ties keep input order. Returns ``None`` when there are no positives.
    """
    scores = np.asarray(scores, dtype=np.float64)
    positives = np.asarray(positives, dtype=bool)
    n_pos = int(positives.sum())
    if n_pos == 0:
        return None
    order = np.argsort(-scores, kind="stable")
    hits = positives[order]
    ranks = np.flatnonzero(hits) + 1
    precision = np.arange(1, n_pos + 1) / ranks
    return math.fsum(precision) / n_pos


def predict(scores) -> np.ndarray:
    # argmax returns the first maximum, i.e. the lowest class id on ties
    return np.asarray(scores).argmax(axis=1)


def confusion_matrix(labels, preds, num_classes: int) -> np.ndarray:
    cm = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(cm, (np.asarray(labels), np.asarray(preds)), 1)
    return cm


def evaluate(scores, labels, class_names=None) -> MetricsReport:
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if scores.ndim != 2 or scores.shape[0] != labels.shape[0] or scores.shape[0] < 1:
        raise ValueError(f"scores {scores.shape} and labels {labels.shape} disagree")
    n, C = scores.shape
    names = list(class_names) if class_names is not None else [str(j) for j in range(C)]
    if len(names) != C:
        raise ValueError("one class name per score column is required")
    aps = [average_precision(scores[:, j], labels == j) for j in range(C)]
    cm = confusion_matrix(labels, predict(scores), C)
    support = cm.sum(axis=1)
    accs = [float(cm[j, j] / support[j]) if support[j] else None for j in range(C)]
    missing = [names[j] for j in range(C) if support[j] == 0]
    if missing:
        warnings.warn(f"classes absent from evaluation labels are excluded from mAP and Avg. C/A: {missing}",
                      stacklevel=2)
    defined_ap = [a for a in aps if a is not None]
    defined_acc = [a for a in accs if a is not None]
    return MetricsReport(
        class_names=names,
        per_class_ap=aps,
        overall_map=math.fsum(defined_ap) / len(defined_ap) if defined_ap else None,
        per_class_acc=accs,
        avg_class_acc=math.fsum(defined_acc) / len(defined_acc) if defined_acc else None,
        overall_acc=float(np.trace(cm) / n),
        confusion=cm.tolist(),
        n_eval=int(n),
    )
