"""Reports computed from a run directory, without calling any backend except the judge."""

from __future__ import annotations

import difflib
import logging
from collections import Counter
from collections.abc import Iterable, Sequence
from pathlib import Path
from typing import Any, Literal

import aiofiles
import attrs
from pydantic import BaseModel, ConfigDict, Field

from actions.models import ActionKind
from harness.errors import EmptyRun, OutOfRangeScore
from llm.gateway import Gateway
from llm.models import Tag
from llm.templates import fill_template
from prompt_tree.nodes import PromptNode, PromptTree
from prompt_tree.paths import enumerate_paths
from prompt_tree.render import render_markdown
from search.checkpoint import Checkpoint, latest_checkpoint, read_checkpoint
from search.models import Lineage, Origin

_logger = logging.getLogger(f"tuner.{__name__}")

ACTION_KINDS: tuple[str, ...] = tuple(str(kind) for kind in ActionKind)


def load_finished_steps(run_dir: Path) -> Checkpoint:
    """The latest checkpoint of a run.

    :raises EmptyRun: There is no checkpoint, or it holds no completed step
    """
    path = latest_checkpoint(run_dir)
    if path is None:
        raise EmptyRun(f"{run_dir} holds no checkpoint")
    checkpoint = read_checkpoint(path)
    if not checkpoint.steps:
        raise EmptyRun(f"The run in {run_dir} has not completed any step")
    return checkpoint


class ActionRow(BaseModel):
    """Applied actions of one step (or of the whole run when `step` is None)."""

    model_config = ConfigDict(frozen=True)

    step: int | None
    counts: dict[str, int]
    percentages: dict[str, float]
    total: int
    empty: bool

    @classmethod
    def from_counts(cls, step: int | None, counts: Counter[str]) -> ActionRow:
        total = sum(counts.values())
        return cls(
            step=step,
            counts={kind: counts[kind] for kind in ACTION_KINDS},
            percentages={
                kind: round(100 * counts[kind] / total, 2) if total else 0.0
                for kind in ACTION_KINDS
            },
            total=total,
            empty=total == 0,
        )


class ActionDistribution(BaseModel):
    per_step: list[ActionRow]
    whole_run: ActionRow

    def to_table(self, delimiter: str = "\t") -> str:
        lines = [delimiter.join(["step", *ACTION_KINDS, "total"])]
        for row in [*self.per_step, self.whole_run]:
            step = "all" if row.step is None else str(row.step)
            cells = [f"{row.percentages[kind]:.2f}" for kind in ACTION_KINDS]
            lines.append(delimiter.join([step, *cells, str(row.total)]))
        return "\n".join(lines) + "\n"


def count_actions(lineages: Iterable[Lineage]) -> Counter[str]:
    return Counter(record.kind for lineage in lineages for record in lineage.applied_actions)


def action_distribution(checkpoint: Checkpoint) -> ActionDistribution:
    """Applied action kinds per step and over the whole run, folded over the lineage.

    :raises EmptyRun: The run has not completed any step
    """
    if not checkpoint.steps:
        raise EmptyRun("Cannot count the actions of a run without steps")

    expansions = [
        candidate.lineage
        for candidate in checkpoint.candidates
        if candidate.lineage.origin is Origin.EXPANSION
    ]
    rows = []
    for step in checkpoint.steps:
        counts = count_actions(lineage for lineage in expansions if lineage.step == step.step)
        row = ActionRow.from_counts(step.step, counts)
        if row.empty:
            _logger.warning("Step %d applied no action", step.step)
        rows.append(row)
    return ActionDistribution(
        per_step=rows, whole_run=ActionRow.from_counts(None, count_actions(expansions))
    )


async def report_action_distribution(run_dir: Path) -> ActionDistribution:
    """Write ``actions.json`` and ``actions.tsv`` into the run directory."""
    distribution = action_distribution(load_finished_steps(run_dir))
    async with aiofiles.open(run_dir / "actions.json", "w") as f:
        await f.write(distribution.model_dump_json(indent=2))
    async with aiofiles.open(run_dir / "actions.tsv", "w") as f:
        await f.write(distribution.to_table())
    return distribution


class CurvePoint(BaseModel):
    model_config = ConfigDict(frozen=True)

    step: int
    best_mean: float | None
    average_mean: float | None
    pool_size: int


class ScoreCurve(BaseModel):
    points: list[CurvePoint]

    def to_text(self) -> str:
        lines = ["step  best    average  pool"]
        for point in self.points:
            best = "-" if point.best_mean is None else f"{point.best_mean:.4f}"
            average = "-" if point.average_mean is None else f"{point.average_mean:.4f}"
            lines.append(f"{point.step:>4}  {best:<6}  {average:<7}  {point.pool_size}")
        return "\n".join(lines) + "\n"


def score_curve(checkpoint: Checkpoint) -> ScoreCurve:
    if not checkpoint.steps:
        raise EmptyRun("Cannot draw the curve of a run without steps")
    born = Counter(candidate.born_step for candidate in checkpoint.candidates)
    points = []
    for step in checkpoint.steps:
        points.append(
            CurvePoint(
                step=step.step,
                best_mean=step.best_mean,
                average_mean=step.average_mean,
                pool_size=sum(count for b, count in born.items() if b <= step.step),
            )
        )
    return ScoreCurve(points=points)


async def report_curve(run_dir: Path) -> ScoreCurve:
    curve = score_curve(load_finished_steps(run_dir))
    async with aiofiles.open(run_dir / "curve.json", "w") as f:
        await f.write(curve.model_dump_json(indent=2))
    return curve


class JudgeScores(BaseModel):
    """Comparison of an initial and an optimized prompt by an LLM judge."""

    model_config = ConfigDict(frozen=True, populate_by_name=True)

    information_preservation: int = Field(alias="Information Preservation")
    overall_dissimilarity: int = Field(alias="Overall Dissimilarity")
    explanation: str = Field(default="", alias="Explanation")


def _judge_scores(value: Any) -> JudgeScores:
    scores = JudgeScores.model_validate(value)
    for name in ("information_preservation", "overall_dissimilarity"):
        if not 1 <= getattr(scores, name) <= 10:
            raise OutOfRangeScore(f"{name} must lie in 1..10, got {getattr(scores, name)}")
    return scores


async def compare_prompts(initial_text: str, final_text: str, gateway: Gateway) -> JudgeScores:
    """Ask the judge how much of the initial prompt survived and how different the result is.

    :raises NoParseableBlock: The judge gave no usable reply, even when asked again
    :raises OutOfRangeScore: A score lies outside of 1 to 10
    """
    user_text = fill_template("compare", initial_prompt=initial_text, optimized_prompt=final_text)
    return await gateway.ask_json(Tag.COMPARE_JUDGE, user_text, _judge_scores)


@attrs.define(frozen=True)
class DiffEntry:
    change: Literal["added", "removed", "modified"]
    path: str


@attrs.define(frozen=True)
class PromptDiff:
    entries: tuple[DiffEntry, ...] = attrs.field(converter=tuple)
    text: str

    @property
    def is_empty(self) -> bool:
        return not self.entries

    def to_json(self) -> dict[str, Any]:
        return {
            "entries": [attrs.asdict(entry) for entry in self.entries],
            "text": self.text,
        }


def _own_content(node: PromptNode) -> PromptNode:
    return attrs.evolve(node, children=())


def _topmost(paths: Sequence[str]) -> list[str]:
    kept: list[str] = []
    for path in paths:
        if not any(path.startswith(parent + "> ") for parent in kept):
            kept.append(path)
    return kept


def diff_trees(parent: PromptTree, child: PromptTree) -> PromptDiff:
    """Node-aligned differences between two prompt trees.

    Nodes are aligned by canonical path. A removed or added subtree is listed once, at its
    top node; a node present in both is modified when its own content differs.
    """
    before = {str(path): node for path, node in enumerate_paths(parent)}
    after = {str(path): node for path, node in enumerate_paths(child)}

    removed = _topmost([path for path in before if path not in after])
    added = _topmost([path for path in after if path not in before])
    modified = [
        path
        for path, node in before.items()
        if path in after and _own_content(node) != _own_content(after[path])
    ]
    entries = (
        [DiffEntry("removed", path) for path in removed]
        + [DiffEntry("added", path) for path in added]
        + [DiffEntry("modified", path) for path in modified]
    )

    text = "".join(
        difflib.unified_diff(
            render_markdown(parent).splitlines(keepends=True),
            render_markdown(child).splitlines(keepends=True),
            fromfile="parent",
            tofile="child",
        )
    )
    return PromptDiff(entries=entries, text=text)
