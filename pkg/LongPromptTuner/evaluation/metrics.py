"""Task metrics computed from per-label tallies.

F1 per label is 2·TP / (2·TP + FP + FN). The macro average runs over the labels present
in gold or predictions; ABSTAIN is not a label, it only costs the gold label a miss.
"""

from __future__ import annotations

from collections import Counter
from collections.abc import Sequence

from evaluation.errors import EmptyRecords
from evaluation.models import (
    ExampleOutcome,
    ExampleRecord,
    LabelTally,
    Metric,
    Prediction,
    prediction_labels,
)


def is_correct(gold: str | frozenset[str], prediction: Prediction) -> bool:
    if isinstance(gold, frozenset):
        return isinstance(prediction, frozenset) and prediction == gold
    return prediction == gold


def tally_labels(
    golds: Sequence[frozenset[str]], predictions: Sequence[frozenset[str]]
) -> dict[str, LabelTally]:
    """Per-label true positive, false positive and false negative counts."""
    true_positives: Counter[str] = Counter()
    false_positives: Counter[str] = Counter()
    false_negatives: Counter[str] = Counter()
    for gold, predicted in zip(golds, predictions, strict=True):
        true_positives.update(gold & predicted)
        false_positives.update(predicted - gold)
        false_negatives.update(gold - predicted)

    labels = sorted(set(true_positives) | set(false_positives) | set(false_negatives))
    return {
        label: LabelTally(true_positives[label], false_positives[label], false_negatives[label])
        for label in labels
    }


def macro_f1(confusion: dict[str, LabelTally]) -> float:
    if not confusion:
        # no label anywhere: every gold set was empty and predicted empty
        return 1.0
    return sum(tally.f1 for tally in confusion.values()) / len(confusion)


def compute_score(
    metric: Metric, outcomes: Sequence[ExampleOutcome], confusion: dict[str, LabelTally]
) -> float:
    if not outcomes:
        raise EmptyRecords("Cannot score an empty set of predictions")
    match metric:
        case Metric.ACCURACY | Metric.MULTI_LABEL_ACCURACY:
            return sum(outcome.correct for outcome in outcomes) / len(outcomes)
        case Metric.MACRO_F1 | Metric.MULTI_LABEL_MACRO_F1:
            return macro_f1(confusion)


def outcomes_and_confusion(
    records: Sequence[ExampleRecord], predictions: Sequence[Prediction]
) -> tuple[list[ExampleOutcome], dict[str, LabelTally]]:
    outcomes = [
        ExampleOutcome(record.id, prediction, is_correct(record.gold, prediction))
        for record, prediction in zip(records, predictions, strict=True)
    ]
    confusion = tally_labels(
        [record.gold_labels for record in records],
        [prediction_labels(prediction) for prediction in predictions],
    )
    return outcomes, confusion
