import json
from pathlib import Path

import numpy as np
import pytest

from harness.errors import EmptyRun, OutOfRangeScore
from harness.reports import (
    ACTION_KINDS,
    action_distribution,
    compare_prompts,
    diff_trees,
    report_action_distribution,
    score_curve,
)
from llm.backends import ScriptedBackend
from llm.errors import NoParseableBlock
from llm.gateway import Gateway
from llm.models import Tag
from prompt_tree.nodes import node_to_dict
from prompt_tree.parser import parse_markdown
from search.checkpoint import Checkpoint, write_checkpoint
from search.models import (
    ActionRecord,
    CandidateRecord,
    Lineage,
    Origin,
    RunStatus,
    SearchConfig,
    StepRecord,
)

PROMPTS_DIR = Path(__file__).parent.parent / "prompt_tree" / "prompts"
PROMPT = "# Task\nSort the words.\n"


def record(candidate_id: str, step: int, actions: list[tuple[str, bool]]) -> CandidateRecord:
    origin = Origin.INITIAL if step == 0 else Origin.EXPANSION
    lineage = Lineage(
        parent_id=None if step == 0 else "c0000",
        step=step,
        origin=origin,
        actions=[ActionRecord(kind=kind, action={}, applied=applied) for kind, applied in actions],
    )
    return CandidateRecord(
        id=candidate_id,
        tree=node_to_dict(parse_markdown(PROMPT).root),
        rendered=PROMPT,
        born_step=step,
        lineage=lineage,
    )


def checkpoint(candidates: list[CandidateRecord], steps: int) -> Checkpoint:
    means = [0.5 + step / 10 for step in range(1, steps + 1)]
    return Checkpoint(
        config=SearchConfig(),
        step=steps,
        status=RunStatus.COMPLETE,
        candidates=candidates,
        steps=[
            StepRecord(
                step=step,
                selected=["c0000"],
                created=[c.id for c in candidates if c.born_step == step],
                best_mean=means[step - 1],
                average_mean=means[step - 1] - 0.1,
            )
            for step in range(1, steps + 1)
        ],
        rng_state=np.random.default_rng(0).bit_generator.state,
    )


def test_action_shares_of_one_step() -> None:
    candidates = [
        record("c0000", 0, []),
        record("c0001", 1, [("Instruction Update", True), ("Node Pruning", True)]),
        record("c0002", 1, [("Instruction Update", True), ("Instruction Update", True)]),
        record("c0003", 1, [("Node Merging", False)]),
    ]

    distribution = action_distribution(checkpoint(candidates, steps=1))

    (row,) = distribution.per_step
    assert row.total == 4
    assert row.percentages["Instruction Update"] == 75.0
    assert row.percentages["Node Pruning"] == 25.0
    assert row.counts["Node Merging"] == 0
    assert distribution.whole_run.counts == row.counts


def test_step_without_applied_actions_is_flagged() -> None:
    candidates = [record("c0000", 0, []), record("c0001", 2, [("Node Expansion", True)])]

    distribution = action_distribution(checkpoint(candidates, steps=2))

    first, second = distribution.per_step
    assert first.empty
    assert set(first.percentages.values()) == {0.0}
    assert not second.empty
    assert second.percentages["Node Expansion"] == 100.0


def test_run_without_steps() -> None:
    with pytest.raises(EmptyRun):
        action_distribution(checkpoint([record("c0000", 0, [])], steps=0))


def recount(candidates: list[CandidateRecord], step: int | None) -> dict[str, int]:
    counts = dict.fromkeys(ACTION_KINDS, 0)
    for candidate in candidates:
        if candidate.lineage.origin != Origin.EXPANSION:
            continue
        if step is not None and candidate.lineage.step != step:
            continue
        for action in candidate.lineage.actions:
            if action.applied:
                counts[action.kind] += 1
    return counts


def test_distribution_equals_recount_on_random_runs() -> None:
    rng = np.random.default_rng(2024)
    for _ in range(100):
        steps = int(rng.integers(1, 6))
        candidates = [record("c0000", 0, [])]
        for position in range(1, int(rng.integers(1, 30))):
            actions = [
                (ACTION_KINDS[int(rng.integers(len(ACTION_KINDS)))], bool(rng.random() < 0.8))
                for _ in range(int(rng.integers(0, 6)))
            ]
            step = int(rng.integers(1, steps + 1))
            candidates.append(record(f"c{position:04d}", step, actions))

        distribution = action_distribution(checkpoint(candidates, steps))

        for row in distribution.per_step:
            assert row.counts == recount(candidates, row.step)
        assert distribution.whole_run.counts == recount(candidates, None)
        for row in [*distribution.per_step, distribution.whole_run]:
            if not row.empty:
                assert sum(row.percentages.values()) == pytest.approx(100, abs=0.1)


async def test_action_report_files(tmp_path) -> None:
    candidates = [record("c0000", 0, []), record("c0001", 1, [("Example Addition", True)])]
    await write_checkpoint(tmp_path, checkpoint(candidates, steps=1))

    await report_action_distribution(tmp_path)

    table = (tmp_path / "actions.tsv").read_text().splitlines()
    assert table[0].split("\t") == ["step", *ACTION_KINDS, "total"]
    assert table[1].split("\t")[0] == "1"
    assert table[2].split("\t")[0] == "all"
    saved = json.loads((tmp_path / "actions.json").read_text())
    assert saved["whole_run"]["counts"]["Example Addition"] == 1


async def test_action_report_of_a_run_dir_without_checkpoint(tmp_path) -> None:
    with pytest.raises(EmptyRun, match="no checkpoint"):
        await report_action_distribution(tmp_path)


def test_score_curve() -> None:
    candidates = [
        record("c0000", 0, []),
        record("c0001", 1, []),
        record("c0002", 1, []),
        record("c0003", 2, []),
    ]

    curve = score_curve(checkpoint(candidates, steps=2))

    assert [point.pool_size for point in curve.points] == [3, 4]
    assert [point.best_mean for point in curve.points] == [0.6, 0.7]
    assert curve.to_text().splitlines()[1].split() == ["1", "0.6000", "0.5000", "3"]


def judge(*replies: str) -> Gateway:
    return Gateway(ScriptedBackend(replies={Tag.COMPARE_JUDGE: list(replies)}))


async def test_judge_scores_are_parsed() -> None:
    gateway = judge(
        '```\n{"Information Preservation": 8, "Overall Dissimilarity": 3, '
        '"Explanation": "Same content, new headings."}\n```'
    )

    scores = await compare_prompts("# A\nold\n", "# B\nnew\n", gateway)

    assert (scores.information_preservation, scores.overall_dissimilarity) == (8, 3)
    assert scores.explanation == "Same content, new headings."
    (request,) = gateway.backend.requests
    assert "# Initial Prompt\n# A\nold\n" in request.user_text
    assert "# Optimized Prompt\n# B\nnew\n" in request.user_text


async def test_judge_score_out_of_range() -> None:
    gateway = judge('{"Information Preservation": 11, "Overall Dissimilarity": 3}')

    with pytest.raises(OutOfRangeScore, match="information_preservation"):
        await compare_prompts("a", "b", gateway)


async def test_judge_without_usable_reply() -> None:
    gateway = judge("Both prompts are fine.", '{"Information Preservation": "high"}')

    with pytest.raises(NoParseableBlock):
        await compare_prompts("a", "b", gateway)
    assert len(gateway.backend.requests) == 2


def test_identical_trees_have_no_diff() -> None:
    tree = parse_markdown((PROMPTS_DIR / "salient_translation.md").read_text())

    diff = diff_trees(tree, tree)

    assert diff.is_empty
    assert diff.text == ""


def test_removed_section_is_one_entry() -> None:
    text = (PROMPTS_DIR / "salient_translation.md").read_text()
    start = text.index("# Performance Analysis")
    pruned = text[:start] + text[text.index("# Additional points") :]

    diff = diff_trees(parse_markdown(text), parse_markdown(pruned))

    assert [(entry.change, entry.path) for entry in diff.entries] == [
        ("removed", "Performance Analysis")
    ]
    assert "-# Performance Analysis\n" in diff.text


def test_rephrased_body_is_modified() -> None:
    parent = parse_markdown("# Task\nSort the words.\n\n# Rules\n* Ignore case.\n")
    child = parse_markdown(
        "# Task\nSort the words alphabetically.\n\n# Rules\n* Ignore case.\n* Keep duplicates.\n"
    )

    diff = diff_trees(parent, child)

    assert [(entry.change, entry.path) for entry in diff.entries] == [
        ("added", "Rules> 2."),
        ("modified", "Task> body"),
    ]
    assert "+Sort the words alphabetically.\n" in diff.text
