from __future__ import annotations

import enum
from collections import Counter
from typing import Any, ClassVar, Final, TypeAlias

import attrs

from prompt_tree.nodes import NodePath

MAX_EXAMPLES: Final = 6


class TemplateKind(enum.StrEnum):
    """Action types as named in the actor's output schema."""

    SECTION_REORDER = "Section Reorder"
    SECTION_REPHRASE = "Section Rephrase"
    EXAMPLE_UPDATE = "Example Update"
    DELETE_SECTION = "Delete Section"
    NEW_SECTION_CREATION = "New Section Creation"
    MERGE_SECTION = "Merge Section"


class UpdateType(enum.StrEnum):
    ADDITION = "Addition"
    REWRITING = "Rewriting"
    DELETION = "Deletion"


class ActionKind(enum.StrEnum):
    """The eight refinement categories used for reporting."""

    STRUCTURAL_REORDERING = "Structural Reordering"
    INSTRUCTION_UPDATE = "Instruction Update"
    EXAMPLE_ADDITION = "Example Addition"
    EXAMPLE_DELETION = "Example Deletion"
    EXAMPLE_REFINEMENT = "Example Refinement"
    NODE_PRUNING = "Node Pruning"
    NODE_EXPANSION = "Node Expansion"
    NODE_MERGING = "Node Merging"


@attrs.define(frozen=True)
class SectionReorder:
    kind: ClassVar[TemplateKind] = TemplateKind.SECTION_REORDER

    section_reference: NodePath
    new_position: NodePath
    explanation: str = ""

    @property
    def references(self) -> tuple[NodePath, ...]:
        return self.section_reference, self.new_position


@attrs.define(frozen=True)
class SectionRephrase:
    kind: ClassVar[TemplateKind] = TemplateKind.SECTION_REPHRASE

    section_reference: NodePath
    updated_key: str
    updated_value: Any
    explanation: str = ""

    @property
    def references(self) -> tuple[NodePath, ...]:
        return (self.section_reference,)


@attrs.define(frozen=True)
class ExampleUpdate:
    kind: ClassVar[TemplateKind] = TemplateKind.EXAMPLE_UPDATE

    section_reference: NodePath
    update_type: UpdateType
    instruction: str
    resolved_examples: tuple[str, ...] | None = attrs.field(
        default=None, converter=attrs.converters.optional(tuple)
    )
    explanation: str = ""

    @property
    def references(self) -> tuple[NodePath, ...]:
        return (self.section_reference,)


@attrs.define(frozen=True)
class DeleteSection:
    kind: ClassVar[TemplateKind] = TemplateKind.DELETE_SECTION

    section_reference: NodePath
    explanation: str = ""

    @property
    def references(self) -> tuple[NodePath, ...]:
        return (self.section_reference,)


@attrs.define(frozen=True)
class NewSectionCreation:
    kind: ClassVar[TemplateKind] = TemplateKind.NEW_SECTION_CREATION

    section_position: NodePath
    new_section_structure: dict[str, Any]
    explanation: str = ""

    @property
    def references(self) -> tuple[NodePath, ...]:
        return (self.section_position,)


@attrs.define(frozen=True)
class MergeSection:
    kind: ClassVar[TemplateKind] = TemplateKind.MERGE_SECTION

    section_reference_merged: tuple[NodePath, NodePath]
    section_position: NodePath
    new_section_structure: dict[str, Any]
    explanation: str = ""

    @property
    def references(self) -> tuple[NodePath, ...]:
        return (*self.section_reference_merged, self.section_position)


EditAction: TypeAlias = (
    SectionReorder
    | SectionRephrase
    | ExampleUpdate
    | DeleteSection
    | NewSectionCreation
    | MergeSection
)

_EXAMPLE_KINDS: Final = {
    UpdateType.ADDITION: ActionKind.EXAMPLE_ADDITION,
    UpdateType.DELETION: ActionKind.EXAMPLE_DELETION,
    UpdateType.REWRITING: ActionKind.EXAMPLE_REFINEMENT,
}


def canonical_kind(action: EditAction) -> ActionKind:
    match action:
        case SectionReorder():
            return ActionKind.STRUCTURAL_REORDERING
        case SectionRephrase():
            return ActionKind.INSTRUCTION_UPDATE
        case ExampleUpdate(update_type=update_type):
            return _EXAMPLE_KINDS[update_type]
        case DeleteSection():
            return ActionKind.NODE_PRUNING
        case NewSectionCreation():
            return ActionKind.NODE_EXPANSION
        case MergeSection():
            return ActionKind.NODE_MERGING
    raise TypeError(f"Not an edit action: {action!r}")


class ViolationCode(enum.StrEnum):
    UNRESOLVED_PATH = "unresolved path"
    BARE_LEAF_REORDER = "bare body not reorderable"
    CROSS_PARENT_REORDER = "reorder across different headings"
    MIXED_KIND_REORDER = "reorder between a heading and a list item"
    CAPACITY = "example capacity exceeded"
    NO_EXAMPLE_HOST = "target cannot hold examples"
    ROOT_TARGET = "the prompt root cannot be edited"
    MISSING_BODY = "new section without body"
    NESTED_MERGE = "merge sources overlap"
    UNRESOLVED_EXAMPLES = "examples not resolved"
    UNKNOWN_ITEM_KEY = "rephrase key names no list item of the section"
    NO_BODY = "the section has no body"


@attrs.define(frozen=True)
class Violation:
    code: ViolationCode
    detail: str = ""

    def __str__(self) -> str:
        return f"{self.code}: {self.detail}" if self.detail else str(self.code)


@attrs.define(frozen=True)
class ActionKindReport:
    canonical_kind: ActionKind
    count: int


@attrs.define(frozen=True)
class ActionOutcome:
    action: EditAction
    applied: bool
    reason: str | None = None
    warnings: tuple[str, ...] = attrs.field(default=(), converter=tuple)


@attrs.define
class ApplyReport:
    outcomes: list[ActionOutcome] = attrs.Factory(list)
    histogram: Counter[ActionKind] = attrs.Factory(Counter)

    @property
    def applied(self) -> list[EditAction]:
        return [outcome.action for outcome in self.outcomes if outcome.applied]

    @property
    def skipped(self) -> list[ActionOutcome]:
        return [outcome for outcome in self.outcomes if not outcome.applied]

    def kind_report(self) -> list[ActionKindReport]:
        """Counts for all eight kinds, including the ones that never occurred."""
        return [ActionKindReport(kind, self.histogram[kind]) for kind in ActionKind]

    def record(self, outcome: ActionOutcome) -> None:
        self.outcomes.append(outcome)
        if outcome.applied:
            self.histogram[canonical_kind(outcome.action)] += 1
