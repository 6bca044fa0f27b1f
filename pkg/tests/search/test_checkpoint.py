import pytest
from pydantic import ValidationError

from prompt_tree.parser import parse_markdown
from search.checkpoint import (
    Checkpoint,
    checkpoint_path,
    latest_checkpoint,
    read_checkpoint,
    write_checkpoint,
)
from search.models import Lineage, Origin, RunState, RunStatus, SearchConfig

PROMPT = "# Task\nSort the words.\n\n## Rules\n1. Ignore case.\n"


@pytest.fixture
def state() -> RunState:
    state = RunState.initial(parse_markdown(PROMPT), seed=11)
    state.candidates[0].observe(0.75, 8)
    return state


def test_checkpoint_path_is_zero_padded(tmp_path) -> None:
    assert checkpoint_path(tmp_path, 7).name == "step-007.checkpoint"
    assert checkpoint_path(tmp_path, 1234).name == "step-1234.checkpoint"


async def test_restored_state_continues_the_random_sequence(tmp_path, state) -> None:
    state.rng.integers(0, 100, size=5)
    checkpoint = Checkpoint.capture(state, SearchConfig(), {"Actor": 3})
    path = await write_checkpoint(tmp_path, checkpoint)

    restored = read_checkpoint(path).restore()

    assert list(restored.rng.integers(0, 2**32, size=6)) == list(
        state.rng.integers(0, 2**32, size=6)
    )


async def test_restored_state_keeps_the_candidates(tmp_path, state) -> None:
    checkpoint = Checkpoint.capture(state, SearchConfig(seed=11), {"Actor": 3})
    restored_checkpoint = read_checkpoint(await write_checkpoint(tmp_path, checkpoint))
    restored = restored_checkpoint.restore()

    (candidate,) = restored.candidates
    assert candidate.id == "c0000"
    assert candidate.rendered == state.candidates[0].rendered
    assert candidate.tree.root == state.candidates[0].tree.root
    assert candidate.mean == 0.75
    assert (candidate.eval_count, candidate.pull_count) == (8, 1)
    assert candidate.lineage == Lineage(origin=Origin.INITIAL)
    assert restored.status is RunStatus.RUNNING
    assert restored_checkpoint.config.seed == 11
    assert restored_checkpoint.backend_state == {"Actor": 3}


async def test_latest_checkpoint_picks_the_highest_step(tmp_path, state) -> None:
    assert latest_checkpoint(tmp_path) is None

    for step in (0, 2, 10):
        state.step = step
        await write_checkpoint(tmp_path, Checkpoint.capture(state, SearchConfig(), {}))
    (tmp_path / "step-99.checkpoint.bak").write_text("stale")

    assert latest_checkpoint(tmp_path) == checkpoint_path(tmp_path, 10)


async def test_unknown_format_is_rejected(tmp_path, state) -> None:
    path = await write_checkpoint(tmp_path, Checkpoint.capture(state, SearchConfig(), {}))
    path.write_text(path.read_text().replace("checkpoint/1", "checkpoint/0"))

    with pytest.raises(ValidationError):
        read_checkpoint(path)
