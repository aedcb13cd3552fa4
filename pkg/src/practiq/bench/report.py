"""Evaluation report shared by both benchmark tasks."""

from __future__ import annotations

import csv
import enum
import io
import json
from collections import Counter
from dataclasses import dataclass, field

from practiq.categories import CategoryLabel

LABELS = tuple(CategoryLabel)
UNPARSED = "unparsed"


class FailureKind(str, enum.Enum):
    HALLUCINATION = "Hallucination"
    INCORRECT_SQL = "IncorrectSql"
    PARTIALLY_CORRECT = "PartiallyCorrect"


def _ratio(num: float, den: float) -> float:
    return num / den if den else 0.0


@dataclass
class EvalReport:
    """Per-category counts; every aggregate is derived from them."""

    task: str
    n: Counter = field(default_factory=Counter)
    correct: Counter = field(default_factory=Counter)
    confusion: dict = field(default_factory=dict)  # gold label -> Counter(pred label or UNPARSED)
    failures: dict = field(default_factory=dict)  # gold label -> Counter(FailureKind)
    config: dict = field(default_factory=dict)

    def add(self, gold: CategoryLabel, ok: bool, predicted=None, failure: FailureKind | None = None) -> None:
        self.n[gold] += 1
        self.correct[gold] += bool(ok)
        if self.task == "classification":
            key = predicted.value if isinstance(predicted, CategoryLabel) else UNPARSED
            self.confusion.setdefault(gold, Counter())[key] += 1
        if failure is not None:
            self.failures.setdefault(gold, Counter())[failure] += 1

    @property
    def categories(self) -> list[CategoryLabel]:
        return [c for c in LABELS if self.n[c]]

    @property
    def per_category_accuracy(self) -> dict:
        return {c: _ratio(self.correct[c], self.n[c]) for c in self.categories}

    def _micro(self, cats) -> float:
        return _ratio(sum(self.correct[c] for c in cats), sum(self.n[c] for c in cats))

    def _macro(self, cats) -> float:
        cats = list(cats)
        return _ratio(sum(_ratio(self.correct[c], self.n[c]) for c in cats), len(cats))

    @property
    def overall(self) -> float:
        """Micro average: weighted by per-category n."""
        return self._micro(self.categories)

    @property
    def overall_excluding_answerable(self) -> float:
        return self._micro([c for c in self.categories if c is not CategoryLabel.ANSWERABLE])

    @property
    def macro(self) -> float:
        return self._macro(self.categories)

    @property
    def macro_excluding_answerable(self) -> float:
        return self._macro([c for c in self.categories if c is not CategoryLabel.ANSWERABLE])

    def failure_shares(self) -> dict:
        out = {}
        for cat, counts in self.failures.items():
            total = sum(counts.values())
            out[cat] = {k: _ratio(counts[k], total) for k in FailureKind}
        return out

    def to_dict(self) -> dict:
        out = {
            "task": self.task,
            "config": self.config,
            "n": {c.value: self.n[c] for c in self.categories},
            "per_category_accuracy": {c.value: a for c, a in self.per_category_accuracy.items()},
            "overall": self.overall,
            "overall_excluding_answerable": self.overall_excluding_answerable,
            "macro": self.macro,
            "macro_excluding_answerable": self.macro_excluding_answerable,
        }
        if self.task == "classification":
            cols = [c.value for c in LABELS] + [UNPARSED]
            out["confusion"] = {
                "columns": cols,
                "rows": {g.value: [self.confusion.get(g, Counter())[k] for k in cols] for g in self.categories},
            }
        if self.failures:
            out["failures"] = {
                c.value: {k.value: self.failures[c][k] for k in FailureKind} for c in LABELS if c in self.failures
            }
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def confusion_csv(self) -> str:
        cols = [c.value for c in LABELS] + [UNPARSED]
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["gold", *cols])
        for g in self.categories:
            writer.writerow([g.value, *(self.confusion.get(g, Counter())[k] for k in cols)])
        return buf.getvalue()
