from __future__ import annotations

import enum
from typing import Any

import attrs
import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from actions.models import ActionOutcome, canonical_kind
from actions.wire import action_to_wire
from prompt_tree.nodes import PromptTree, node_from_dict, node_to_dict
from prompt_tree.render import render_markdown


class Aggregation(enum.StrEnum):
    NODE = "node"
    PATTERN = "pattern"
    NONE = "none"


class SearchConfig(BaseModel):
    """Beam and bandit settings of one optimization run."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    beam_select: int = Field(default=4, gt=0)
    groups: int = Field(default=4, gt=0)
    max_steps: int = Field(default=8, ge=0)
    candidate_budget: int = Field(default=384, gt=0)
    ucb_c: float = Field(default=2.0, ge=0.0)
    ucb_rounds: int = Field(default=24, gt=0)
    ucb_sample_size: int = Field(default=8, gt=0)
    top_b: int = Field(default=4, gt=0)
    error_batch_limit: int = Field(default=8, gt=0)
    aggregation: Aggregation = Aggregation.NODE
    rephrase_enabled: bool = False
    structure_unstructured: bool = False
    expansion_concurrency: int = Field(default=1, gt=0)
    seed: int = 0

    @model_validator(mode="after")
    def _step_fits_budget(self) -> SearchConfig:
        if self.beam_select * self.groups > self.candidate_budget:
            raise ValueError(
                f"beam_select * groups ({self.beam_select * self.groups}) exceeds "
                f"candidate_budget ({self.candidate_budget})"
            )
        return self


class Origin(enum.StrEnum):
    INITIAL = "initial"
    EXPANSION = "expansion"
    REPHRASE = "rephrase"


class RunStatus(enum.StrEnum):
    RUNNING = "running"
    COMPLETE = "complete"
    STALLED = "stalled"
    ABORTED = "aborted"


class ActionRecord(BaseModel):
    """One action behind a candidate, in the actor's output schema."""

    model_config = ConfigDict(frozen=True)

    kind: str
    action: dict[str, Any]
    applied: bool
    reason: str | None = None

    @classmethod
    def from_outcome(cls, outcome: ActionOutcome) -> ActionRecord:
        return cls(
            kind=str(canonical_kind(outcome.action)),
            action=action_to_wire(outcome.action),
            applied=outcome.applied,
            reason=outcome.reason,
        )


class Lineage(BaseModel):
    model_config = ConfigDict(frozen=True)

    parent_id: str | None = None
    step: int = 0
    origin: Origin = Origin.INITIAL
    group_id: str | None = None
    reflection_digests: list[str] = []
    actions: list[ActionRecord] = []
    rejected: list[str] = []

    @property
    def applied_actions(self) -> list[ActionRecord]:
        return [record for record in self.actions if record.applied]


@attrs.define
class Candidate:
    """One prompt version in the pool, with its bandit statistics.

    The estimate is the sample-size weighted mean of all rewards observed so far.
    """

    id: str
    tree: PromptTree
    born_step: int
    lineage: Lineage
    rendered: str = attrs.field()
    reward_weighted_sum: float = 0.0
    eval_count: int = 0
    pull_count: int = 0
    quarantined: bool = False
    final_score: float | None = None

    @rendered.default
    def _render(self) -> str:
        return render_markdown(self.tree)

    @property
    def mean(self) -> float | None:
        if self.quarantined:
            return 0.0
        if self.eval_count == 0:
            return None
        return self.reward_weighted_sum / self.eval_count

    def observe(self, reward: float, sample_size: int) -> None:
        self.reward_weighted_sum += reward * sample_size
        self.eval_count += sample_size
        self.pull_count += 1


class CandidateRecord(BaseModel):
    """Persisted form of a candidate."""

    id: str
    tree: dict[str, Any]
    rendered: str
    born_step: int
    lineage: Lineage
    reward_weighted_sum: float = 0.0
    eval_count: int = 0
    pull_count: int = 0
    quarantined: bool = False
    final_score: float | None = None

    @classmethod
    def from_candidate(cls, candidate: Candidate) -> CandidateRecord:
        return cls(
            id=candidate.id,
            tree=node_to_dict(candidate.tree.root),
            rendered=candidate.rendered,
            born_step=candidate.born_step,
            lineage=candidate.lineage,
            reward_weighted_sum=candidate.reward_weighted_sum,
            eval_count=candidate.eval_count,
            pull_count=candidate.pull_count,
            quarantined=candidate.quarantined,
            final_score=candidate.final_score,
        )

    def to_candidate(self) -> Candidate:
        return Candidate(
            id=self.id,
            tree=PromptTree.from_root(node_from_dict(self.tree)),
            born_step=self.born_step,
            lineage=self.lineage,
            rendered=self.rendered,
            reward_weighted_sum=self.reward_weighted_sum,
            eval_count=self.eval_count,
            pull_count=self.pull_count,
            quarantined=self.quarantined,
            final_score=self.final_score,
        )


class StepRecord(BaseModel):
    model_config = ConfigDict(frozen=True)

    step: int
    selected: list[str]
    created: list[str]
    best_mean: float | None = None
    average_mean: float | None = None


class RankedPrompt(BaseModel):
    model_config = ConfigDict(frozen=True)

    candidate_id: str
    text: str
    score: float
    lineage: Lineage


@attrs.define
class RunState:
    """Everything an optimization run needs to continue after a restart."""

    candidates: list[Candidate]
    rng: np.random.Generator
    step: int = 0
    steps: list[StepRecord] = attrs.Factory(list)
    status: RunStatus = RunStatus.RUNNING
    stalled_step: int | None = None
    ranking: list[RankedPrompt] = attrs.Factory(list)

    @classmethod
    def initial(cls, tree: PromptTree, seed: int) -> RunState:
        candidate = Candidate(id=candidate_id(0), tree=tree, born_step=0, lineage=Lineage())
        return cls(candidates=[candidate], rng=np.random.default_rng(seed))

    def by_id(self, candidate_id: str) -> Candidate:
        return next(candidate for candidate in self.candidates if candidate.id == candidate_id)

    @property
    def next_id(self) -> str:
        return candidate_id(len(self.candidates))


def candidate_id(position: int) -> str:
    return f"c{position:04d}"
