"""Classification metrics over a labeled item file.

Per-class accuracy, the support-weighted average (which equals overall
accuracy by construction), binary high-risk accuracy (USML/NRC/CCL all
map to the high-risk side, EAR99 to the other), and a confusion matrix in
both raw counts and row-normalized form. Items the pipeline defers to a
human are excluded from accuracy by default and reported separately;
--score-deferred-as-proposal scores them by their proposed label instead.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .agents import ItemFields
from .errors import EmptyEvalSet
from .labels import RISK_PRIORITY, ControlList, is_hrp
from .messages import ItemState

LABEL_ORDER: tuple[ControlList, ...] = RISK_PRIORITY  # USML, NRC, CCL, EAR99


@dataclass(frozen=True)
class LabeledItem:
    fields: ItemFields
    true_label: ControlList


@dataclass
class EvalReport:
    per_class_accuracy: dict[str, float | None]
    weighted_average: float
    binary_accuracy: float
    confusion: list[list[int]]
    confusion_row_normalized: list[list[float]]
    n_items: int
    n_scored: int
    n_deferred: int
    pairs: list[tuple[str, str]] = field(default_factory=list)  # (true, predicted)

    def to_dict(self) -> dict:
        return {
            "per_class_accuracy": self.per_class_accuracy,
            "weighted_average": self.weighted_average,
            "binary_accuracy": self.binary_accuracy,
            "confusion": self.confusion,
            "confusion_row_normalized": self.confusion_row_normalized,
            "n_items": self.n_items,
            "n_scored": self.n_scored,
            "n_deferred": self.n_deferred,
            "labels": [label.value for label in LABEL_ORDER],
        }


def score_pairs(pairs: Sequence[tuple[ControlList, ControlList]], n_items: int | None = None,
                n_deferred: int = 0) -> EvalReport:
    """Build the full report from (true, predicted) pairs."""
    index = {label: i for i, label in enumerate(LABEL_ORDER)}
    confusion = [[0] * len(LABEL_ORDER) for _ in LABEL_ORDER]
    for true, predicted in pairs:
        confusion[index[true]][index[predicted]] += 1

    per_class: dict[str, float | None] = {}
    weighted_num = 0.0
    total = 0
    for i, label in enumerate(LABEL_ORDER):
        support = sum(confusion[i])
        if support == 0:
            per_class[label.value] = None
            continue
        acc = confusion[i][i] / support
        per_class[label.value] = acc
        weighted_num += support * acc
        total += support

    normalized = []
    for row in confusion:
        support = sum(row)
        if support == 0:
            normalized.append([0.0] * len(row))
        else:
            normalized.append([c / support for c in row])

    binary_correct = sum(
        1 for true, predicted in pairs if is_hrp(true) == is_hrp(predicted)
    )
    return EvalReport(
        per_class_accuracy=per_class,
        weighted_average=weighted_num / total if total else 0.0,
        binary_accuracy=binary_correct / len(pairs) if pairs else 0.0,
        confusion=confusion,
        confusion_row_normalized=normalized,
        n_items=n_items if n_items is not None else len(pairs),
        n_scored=len(pairs),
        n_deferred=n_deferred,
        pairs=[(t.value, p.value) for t, p in pairs],
    )


def evaluate(
    items: Sequence[LabeledItem],
    pipeline,
    score_deferred_as_proposal: bool = False,
    parallelism: int = 1,
) -> EvalReport:
    """Run every item through the pipeline and score the outcomes."""
    if not items:
        raise EmptyEvalSet("no labeled items to evaluate")
    records = pipeline.run_batch([item.fields for item in items], parallelism=parallelism)
    pairs: list[tuple[ControlList, ControlList]] = []
    n_deferred = 0
    for item, record in zip(items, records):
        status = record["status"]
        decision = record.get("decision")
        if status == ItemState.AWAITING_HUMAN.value:
            n_deferred += 1
            if not score_deferred_as_proposal:
                continue
        if decision is None:
            continue
        pairs.append((item.true_label, ControlList(decision["label"])))
    return score_pairs(pairs, n_items=len(items), n_deferred=n_deferred)


# ---------------------------------------------------------------------------
# Rendering
# ---------------------------------------------------------------------------


def _percent(value: float | None, decimals: int = 0) -> str:
    if value is None:
        return "n/a"
    return f"{value * 100:.{decimals}f}%"


def render_table(report: EvalReport) -> str:
    """One header line, one single-spaced value line: per-class, weighted, binary."""
    headers = [label.value for label in LABEL_ORDER] + ["Weighted Avg.", "Binary Acc"]
    values = [_percent(report.per_class_accuracy[label.value]) for label in LABEL_ORDER]
    values += [_percent(report.weighted_average, 2), _percent(report.binary_accuracy, 2)]
    return " ".join(headers) + "\n" + " ".join(values) + "\n"


def render_confusion_csv(report: EvalReport) -> str:
    """Row-normalized confusion matrix, true labels down, predicted across."""
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["true\\predicted"] + [label.value for label in LABEL_ORDER])
    for label, row in zip(LABEL_ORDER, report.confusion_row_normalized):
        writer.writerow([label.value] + [f"{v:.6f}" for v in row])
    return out.getvalue()


def render_report(report: EvalReport) -> tuple[str, str]:
    return render_table(report), render_confusion_csv(report)


# ---------------------------------------------------------------------------
# Input format
# ---------------------------------------------------------------------------

EVAL_CSV_HEADER = ("manufacturer", "equipment_or_service", "model_no", "description", "true_label")


def read_labeled_csv(text: str) -> list[LabeledItem]:
    reader = csv.DictReader(io.StringIO(text))
    missing = set(EVAL_CSV_HEADER) - set(reader.fieldnames or [])
    if missing:
        raise ValueError(f"eval CSV missing columns: {sorted(missing)}")
    items = []
    for row in reader:
        items.append(
            LabeledItem(
                fields=ItemFields(
                    manufacturer=row["manufacturer"],
                    equipment_or_service=row["equipment_or_service"],
                    model_no=row["model_no"],
                    description=row.get("description") or None,
                ),
                true_label=ControlList(row["true_label"]),
            )
        )
    return items
