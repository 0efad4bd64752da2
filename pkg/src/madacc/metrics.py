"""Confusion matrices and Macro / Weighted / per-class F1, reported in percent."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Iterable, Sequence

from .errors import DuplicateInstanceId, EmptyMatrix
from .labels import LABELS, ArgLabel

SHORT_NAMES = {ArgLabel.MAJOR_CLAIM: "MC", ArgLabel.CLAIM: "Claim", ArgLabel.PREMISE: "Premise"}


@dataclass(frozen=True)
class Prediction:
    instance_id: str
    predicted: ArgLabel | None
    gold: ArgLabel
    failed: bool = False
    usage: Any = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if not self.failed and self.predicted is None:
            raise ValueError(f"{self.instance_id}: non-failed prediction needs a label")

    def to_json(self) -> dict:
        return {
            "instance_id": self.instance_id,
            "predicted": None if self.failed else self.predicted.value,
            "gold": self.gold.value,
            "failed": self.failed,
        }

    @classmethod
    def from_json(cls, data: dict) -> "Prediction":
        failed = bool(data.get("failed", False))
        predicted = data.get("predicted")
        return cls(
            str(data["instance_id"]),
            None if failed or predicted is None else ArgLabel(predicted),
            ArgLabel(data["gold"]),
            failed,
        )


@dataclass(frozen=True)
class ConfusionMatrix:
    """Rows are gold labels, columns predicted labels, both in canonical order."""

    counts: tuple[tuple[int, int, int], ...]
    failed: int = 0

    def __post_init__(self):
        if len(self.counts) != 3 or any(len(row) != 3 for row in self.counts):
            raise ValueError("confusion matrix must be 3x3")
        if any(c < 0 for row in self.counts for c in row):
            raise ValueError("confusion counts must be non-negative")

    def __getitem__(self, key: tuple[ArgLabel, ArgLabel]) -> int:
        gold, pred = key
        return self.counts[gold.order][pred.order]

    @property
    def total(self) -> int:
        return sum(map(sum, self.counts))

    def support(self, label: ArgLabel) -> int:
        return sum(self.counts[label.order])

    @classmethod
    def from_rows(cls, rows: Sequence[Sequence[int]], failed: int = 0) -> "ConfusionMatrix":
        return cls(tuple(tuple(int(c) for c in row) for row in rows), failed)  # type: ignore[arg-type]


@dataclass(frozen=True)
class ClassScores:
    precision: float
    recall: float
    f1: float
    support: int


@dataclass(frozen=True)
class EvalReport:
    per_class: dict[ArgLabel, ClassScores]
    macro_f1: float
    weighted_f1: float
    failed: int = 0
    total: int = 0

    def f1(self, label: ArgLabel) -> float:
        return self.per_class[label].f1

    def to_json(self) -> dict:
        return {
            "macro_f1": self.macro_f1,
            "weighted_f1": self.weighted_f1,
            "per_class": {
                label.value: {
                    "precision": s.precision,
                    "recall": s.recall,
                    "f1": s.f1,
                    "support": s.support,
                }
                for label, s in self.per_class.items()
            },
            "scored": self.total,
            "failed": self.failed,
        }


def confusion(predictions: Iterable[Prediction]) -> ConfusionMatrix:
    counts = [[0, 0, 0] for _ in LABELS]
    failed = 0
    seen: set[str] = set()
    for pred in predictions:
        if pred.instance_id in seen:
            raise DuplicateInstanceId(f"instance {pred.instance_id!r} appears more than once")
        seen.add(pred.instance_id)
        if pred.failed:
            failed += 1
            continue
        counts[pred.gold.order][pred.predicted.order] += 1
    return ConfusionMatrix.from_rows(counts, failed)


def _ratio(num: float, den: float) -> float:
    return num / den if den else 0.0


def macro_average(f1s: Sequence[float]) -> float:
    return math.fsum(f1s) / len(f1s)


def f1_scores(matrix: ConfusionMatrix) -> EvalReport:
    total = matrix.total
    if total == 0:
        raise EmptyMatrix("no scored predictions (all failed or none given)")
    per_class = {}
    for label in LABELS:
        i = label.order
        tp = matrix.counts[i][i]
        predicted = sum(row[i] for row in matrix.counts)
        support = sum(matrix.counts[i])
        precision = _ratio(tp, predicted)
        recall = _ratio(tp, support)
        f1 = _ratio(2 * precision * recall, precision + recall)
        per_class[label] = ClassScores(100 * precision, 100 * recall, 100 * f1, support)
    macro = macro_average([s.f1 for s in per_class.values()])
    weighted = math.fsum(s.support * s.f1 for s in per_class.values()) / total
    return EvalReport(per_class, macro, weighted, matrix.failed, total)


def evaluate(predictions: Iterable[Prediction]) -> EvalReport:
    return f1_scores(confusion(predictions))


_COLUMNS = ("Macro F1", "W-F1") + tuple(SHORT_NAMES[label] for label in LABELS)


def format_report(report: EvalReport, method: str = "MAD-ACC") -> str:
    width = max(len(method), len("Method"))
    header = f"{'Method':<{width}}" + "".join(f"{c:>10}" for c in _COLUMNS)
    values = [report.macro_f1, report.weighted_f1] + [report.f1(label) for label in LABELS]
    row = f"{method:<{width}}" + "".join(f"{v:>10.1f}" for v in values)
    rule = "-" * len(header)
    lines = [header, rule, row, rule, f"scored: {report.total}", f"failed: {report.failed} (excluded)"]
    return "\n".join(lines) + "\n"
