import pytest

from evaluation.extraction import extract
from evaluation.models import ABSTAIN, Extraction, Metric, TaskSpec

OPTIONS = TaskSpec(name="salient", label_set=("(A)", "(B)", "(C)", "(D)", "(E)", "(F)"))
YES_NO = TaskSpec(name="causal", label_set=("Yes", "No"), extraction=Extraction.YES_NO)
VERBATIM = TaskSpec(
    name="nli", label_set=("entailment", "not entailment"), extraction=Extraction.VERBATIM_LABEL
)
HARMS = TaskSpec(
    name="beavertails",
    label_set=("violence", "privacy_violation", "self_harm"),
    metric=Metric.MULTI_LABEL_MACRO_F1,
    extraction=Extraction.JSON_BOOLEAN_MAP,
)
EMOTIONS = TaskSpec(
    name="goemotions",
    label_set=("joy", "anger", "neutral"),
    metric=Metric.MULTI_LABEL_ACCURACY,
    extraction=Extraction.COMMA_SEPARATED_IDS,
)


@pytest.mark.parametrize(
    ("task", "reply", "expected"),
    [
        (OPTIONS, "The answer is (D).", "(D)"),
        (OPTIONS, "Options (A) and (B) do not fit, so the answer is (C)", "(C)"),
        (OPTIONS, "The answer is (Z).", ABSTAIN),
        (OPTIONS, "I am not sure.", ABSTAIN),
        (YES_NO, "yes, because the act caused it", "Yes"),
        (YES_NO, "No.", "No"),
        (YES_NO, "Considering the norms... the answer is yes", "Yes"),
        (YES_NO, "Nothing to say", ABSTAIN),
        (VERBATIM, "This is not entailment.", "not entailment"),
        (VERBATIM, "Entailment", "entailment"),
        (VERBATIM, "unclear", ABSTAIN),
        (EMOTIONS, "Reasoning first.\nLabels: joy, anger", frozenset({"joy", "anger"})),
        (EMOTIONS, "neutral", frozenset({"neutral"})),
        (EMOTIONS, "no idea", ABSTAIN),
    ],
)
def test_extract(task, reply, expected) -> None:
    assert extract(reply, task) == expected


def test_json_boolean_map() -> None:
    reply = (
        "Return value:\n```json\n"
        '{"violence": true, "privacy_violation": false, "self_harm": "true", "other": true}\n```'
    )

    assert extract(reply, HARMS) == frozenset({"violence", "self_harm"})


def test_json_boolean_map_all_false_is_an_empty_prediction() -> None:
    reply = '{"violence": false, "privacy_violation": false, "self_harm": false}'

    assert extract(reply, HARMS) == frozenset()


@pytest.mark.parametrize("reply", ["not json", "[true, false]"])
def test_json_boolean_map_abstains(reply) -> None:
    assert extract(reply, HARMS) == ABSTAIN


@pytest.mark.parametrize(
    ("fields", "message"),
    [
        ({"label_set": ("A", "B")}, "Option labels"),
        ({"label_set": ("Yes", "Maybe"), "extraction": Extraction.YES_NO}, "YesNo"),
        ({"label_set": ("(A)",), "metric": Metric.MULTI_LABEL_ACCURACY}, "does not fit"),
        ({"label_set": ("(A)",), "input_wrapper": "{prompt}"}, "placeholder"),
        ({"label_set": ()}, "at least 1"),
    ],
)
def test_task_spec_validation(fields, message) -> None:
    with pytest.raises(ValueError, match=message):
        TaskSpec(name="t", **fields)


def test_default_input_wrapper() -> None:
    assert OPTIONS.wrap("Classify {this}.", "x") == "Classify {this}.\n\nInput: x"
