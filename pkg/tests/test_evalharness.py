from __future__ import annotations

import pytest

from hrptriage.errors import EmptyEvalSet
from hrptriage.evalharness import (
    EvalReport,
    LabeledItem,
    evaluate,
    read_labeled_csv,
    render_confusion_csv,
    render_table,
    score_pairs,
)
from hrptriage.labels import ControlList, is_hrp

from conftest import CLEAN_ITEMS, CONFLICT_ITEM

U, N, C, E = ControlList.USML, ControlList.NRC, ControlList.CCL, ControlList.EAR99


def _recount_oracle(pairs):
    """Brute-force recount, independent of score_pairs internals."""
    labels = [U, N, C, E]
    per_class = {}
    for label in labels:
        mine = [p for p in pairs if p[0] is label]
        per_class[label.value] = (
            sum(1 for t, p in mine if p is t) / len(mine) if mine else None
        )
    overall = sum(1 for t, p in pairs if t is p) / len(pairs)
    binary = sum(1 for t, p in pairs if is_hrp(t) == is_hrp(p)) / len(pairs)
    return per_class, overall, binary


# ---------------------------------------------------------------------------
# score_pairs
# ---------------------------------------------------------------------------


def test_perfect_predictions():
    pairs = [(label, label) for label in (U, N, C, E) for _ in range(10)][:10]
    report = score_pairs(pairs)
    for value in report.per_class_accuracy.values():
        assert value in (1.0, None)
    assert report.weighted_average == 1.0
    assert report.binary_accuracy == 1.0
    for i, row in enumerate(report.confusion):
        for j, count in enumerate(row):
            if i != j:
                assert count == 0


def test_counting_example_usml_row():
    pairs = [(U, U)] * 8 + [(U, C)] * 2
    report = score_pairs(pairs)
    assert report.per_class_accuracy["USML"] == pytest.approx(0.8)
    assert report.confusion_row_normalized[0] == pytest.approx([0.8, 0.0, 0.2, 0.0])


def test_cross_hrp_confusion_counts_binary_correct():
    pairs = [(C, U)]
    report = score_pairs(pairs)
    assert report.binary_accuracy == 1.0  # both high-risk
    assert report.per_class_accuracy["CCL"] == 0.0  # four-class wrong


def test_matches_bruteforce_recount():
    import random

    rng = random.Random(3)
    labels = [U, N, C, E]
    pairs = [(rng.choice(labels), rng.choice(labels)) for _ in range(200)]
    report = score_pairs(pairs)
    per_class, overall, binary = _recount_oracle(pairs)
    assert report.per_class_accuracy == pytest.approx(per_class)
    assert report.weighted_average == pytest.approx(overall, abs=1e-12)
    assert report.binary_accuracy == pytest.approx(binary, abs=1e-12)


def test_weighted_average_equals_overall_accuracy_identity():
    import random

    rng = random.Random(11)
    labels = [U, N, C, E]
    for _ in range(20):
        pairs = [(rng.choice(labels), rng.choice(labels)) for _ in range(rng.randint(1, 120))]
        report = score_pairs(pairs)
        overall = sum(1 for t, p in pairs if t is p) / len(pairs)
        assert abs(report.weighted_average - overall) < 1e-12


def test_binary_at_least_four_class_when_confusions_stay_high_risk():
    import random

    rng = random.Random(5)
    high = [U, N, C]
    for _ in range(20):
        pairs = []
        for _ in range(rng.randint(1, 80)):
            true = rng.choice([U, N, C, E])
            predicted = rng.choice(high) if true is not E and rng.random() < 0.5 else true
            pairs.append((true, predicted))
        report = score_pairs(pairs)
        four_class = sum(1 for t, p in pairs if t is p) / len(pairs)
        assert report.binary_accuracy >= four_class - 1e-12


def test_rows_sum_to_one_or_zero():
    pairs = [(U, U)] * 3 + [(C, E)] * 2
    report = score_pairs(pairs)
    for row in report.confusion_row_normalized:
        total = sum(row)
        assert total == pytest.approx(1.0, abs=1e-9) or total == 0.0


def test_single_item_row_normalizes_to_one():
    report = score_pairs([(N, N)])
    assert report.confusion_row_normalized[1][1] == 1.0
    assert report.n_scored == 1


def test_zero_support_class_is_na_and_excluded():
    pairs = [(U, U)] * 4  # only USML support
    report = score_pairs(pairs)
    assert report.per_class_accuracy["NRC"] is None
    assert report.weighted_average == 1.0
    assert "n/a" in render_table(report)


# ---------------------------------------------------------------------------
# rendering
# ---------------------------------------------------------------------------


def test_reference_row_formatting_byte_exact():
    report = EvalReport(
        per_class_accuracy={"USML": 0.88, "NRC": 0.90, "CCL": 0.56, "EAR99": 0.40},
        weighted_average=0.6312,
        binary_accuracy=0.7037,
        confusion=[[0] * 4 for _ in range(4)],
        confusion_row_normalized=[[0.0] * 4 for _ in range(4)],
        n_items=0,
        n_scored=0,
        n_deferred=0,
    )
    table = render_table(report)
    lines = table.splitlines()
    assert lines[0] == "USML NRC CCL EAR99 Weighted Avg. Binary Acc"
    assert lines[1] == "88% 90% 56% 40% 63.12% 70.37%"


def test_confusion_csv_layout():
    report = score_pairs([(U, U), (U, C), (E, E)])
    text = render_confusion_csv(report)
    lines = text.strip().splitlines()
    assert lines[0] == "true\\predicted,USML,NRC,CCL,EAR99"
    assert len(lines) == 5
    assert lines[1].startswith("USML,0.500000,")


# ---------------------------------------------------------------------------
# evaluate() through the pipeline
# ---------------------------------------------------------------------------


def test_evaluate_on_fixture_corpus(pipeline):
    items = [LabeledItem(fields, label) for label, fields in CLEAN_ITEMS.items()]
    items.append(LabeledItem(CONFLICT_ITEM, ControlList.CCL))  # defers
    report = evaluate(items, pipeline)
    assert report.n_items == 5
    assert report.n_deferred == 1
    assert report.n_scored == 4
    assert report.weighted_average == 1.0
    assert report.binary_accuracy == 1.0


def test_evaluate_can_score_deferred_as_proposal(pipeline):
    items = [LabeledItem(CONFLICT_ITEM, ControlList.CCL)]
    report = evaluate(items, pipeline, score_deferred_as_proposal=True)
    assert report.n_scored == 1
    assert report.n_deferred == 1


def test_evaluate_rejects_empty_set(pipeline):
    with pytest.raises(EmptyEvalSet):
        evaluate([], pipeline)


def test_read_labeled_csv_parses_and_validates():
    text = (
        "manufacturer,equipment_or_service,model_no,description,true_label\n"
        "Acme Arms,automatic rifle,AR-500,,USML\n"
    )
    items = read_labeled_csv(text)
    assert items[0].true_label is ControlList.USML
    assert items[0].fields.description is None
    with pytest.raises(ValueError):
        read_labeled_csv("manufacturer,model_no\nAcme,Z9\n")
