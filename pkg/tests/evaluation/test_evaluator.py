import pytest

from evaluation.errors import EmptyRecords
from evaluation.evaluator import Evaluator
from evaluation.models import ABSTAIN, ExampleRecord, TaskSpec
from llm.backends import ScriptedBackend
from llm.gateway import Gateway
from llm.models import GenerationRequest, Tag

TASK = TaskSpec(name="letters", label_set=("(A)", "(B)", "(C)"))

RECORDS = [
    ExampleRecord(id=f"r{index}", input=f"question {index}", gold="(A)" if index % 2 else "(B)")
    for index in range(20)
]


def answer_by_prompt(request: GenerationRequest) -> str:
    """'always A' prompts answer (A), 'perfect' prompts answer the gold label."""
    if request.user_text.startswith("perfect"):
        index = int(request.user_text.rsplit(" ", 1)[-1])
        return "The answer is (A)." if index % 2 else "The answer is (B)."
    if request.user_text.startswith("mumble"):
        return "hmm"
    return "(A)"


@pytest.fixture()
def backend() -> ScriptedBackend:
    return ScriptedBackend(responders={Tag.EVALUATION: answer_by_prompt})


@pytest.fixture()
def evaluator(backend) -> Evaluator:
    return Evaluator(TASK, Gateway(backend))


async def test_predict_uses_the_input_wrapper(evaluator, backend) -> None:
    assert await evaluator.predict("always A", RECORDS[0]) == "(A)"
    assert backend.requests[0].user_text == "always A\n\nInput: question 0"
    assert backend.requests[0].temperature == 0.0


async def test_score(evaluator) -> None:
    result = await evaluator.score("always A", RECORDS)

    assert result.score == 0.5
    assert result.sample_size == 20
    assert result.confusion["(A)"].true_positives == 10
    assert result.confusion["(B)"].false_negatives == 10


async def test_perfect_prompt(evaluator) -> None:
    assert (await evaluator.score("perfect", RECORDS)).score == 1.0
    assert await evaluator.misclassified("perfect", RECORDS, 8, seed=0) == []


async def test_scores_are_deterministic_and_cached(evaluator, backend) -> None:
    first = await evaluator.score("always A", RECORDS)
    calls = len(backend.requests)
    second = await evaluator.score("always A", RECORDS)

    assert first == second
    assert len(backend.requests) == calls == 20


async def test_empty_records(evaluator) -> None:
    with pytest.raises(EmptyRecords):
        await evaluator.score("always A", [])


async def test_misclassified_is_limited_and_seeded(evaluator) -> None:
    first = await evaluator.misclassified("always A", RECORDS, 8, seed=3)
    again = await Evaluator(TASK, evaluator.gateway).misclassified("always A", RECORDS, 8, seed=3)

    assert len(first) == 8
    assert first == again
    assert all(item.gold == "(B)" and item.prediction == "(A)" for item in first)
    assert first[0].to_input_data() == {
        "id": first[0].id,
        "input": first[0].input,
        "prediction": "(A)",
        "ground_truth": "(B)",
    }


async def test_misclassified_follows_the_seed(evaluator) -> None:
    ids = {
        tuple(item.id for item in await evaluator.misclassified("always A", RECORDS, 10, seed=seed))
        for seed in range(5)
    }

    assert len(ids) > 1


async def test_abstentions_are_errors(evaluator) -> None:
    wrong = await evaluator.misclassified("mumble", RECORDS, 30, seed=0)

    assert len(wrong) == 20
    assert {item.prediction for item in wrong} == {ABSTAIN}


async def test_limit_must_be_positive(evaluator) -> None:
    with pytest.raises(ValueError):
        await evaluator.misclassified("always A", RECORDS, 0, seed=0)
