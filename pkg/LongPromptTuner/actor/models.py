from __future__ import annotations

import attrs

from actions.models import ActionOutcome, ApplyReport, EditAction
from prompt_tree.nodes import PromptTree


@attrs.define(frozen=True)
class Proposal:
    """What the actor proposed for one reflection or group.

    `actions` passed validation against the tree they were proposed for, `dropped` did
    not. `rejected` holds the reasons for reply entries that were not actions at all.
    """

    actions: tuple[EditAction, ...] = attrs.field(default=(), converter=tuple)
    dropped: tuple[ActionOutcome, ...] = attrs.field(default=(), converter=tuple)
    rejected: tuple[str, ...] = attrs.field(default=(), converter=tuple)

    @property
    def is_empty(self) -> bool:
        return not self.actions


@attrs.define(frozen=True)
class StructuralUpdate:
    tree: PromptTree
    proposal: Proposal
    report: ApplyReport


@attrs.define(frozen=True)
class Expansion:
    """A candidate tree built from shared structural actions and one group's actions."""

    tree: PromptTree
    group_id: str
    structural: StructuralUpdate
    proposal: Proposal
    report: ApplyReport

    @property
    def outcomes(self) -> list[ActionOutcome]:
        """Every action behind this tree in order, with dropped proposals marked as such."""
        return [
            *self.structural.proposal.dropped,
            *self.structural.report.outcomes,
            *self.proposal.dropped,
            *self.report.outcomes,
        ]

    @property
    def rejected(self) -> list[str]:
        return [*self.structural.proposal.rejected, *self.proposal.rejected]
