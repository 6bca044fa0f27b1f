"""Conversion between edit actions and the actor's JSON output schema."""

from __future__ import annotations

import logging
import re
from typing import Any, Final

from pydantic import BaseModel, ConfigDict, Field, ValidationError

from actions.errors import InvalidAction
from actions.models import (
    DeleteSection,
    EditAction,
    ExampleUpdate,
    MergeSection,
    NewSectionCreation,
    SectionReorder,
    SectionRephrase,
    TemplateKind,
    UpdateType,
)
from prompt_tree.nodes import NodePath

_logger = logging.getLogger(f"tuner.{__name__}")

_ALIASES: Final = {
    TemplateKind.SECTION_REORDER: ("sectionreorder", "sectionreordering", "reorder"),
    TemplateKind.SECTION_REPHRASE: ("sectionrephrase", "rephrase", "sectionrephrasing"),
    TemplateKind.EXAMPLE_UPDATE: ("exampleupdate", "examplesupdate"),
    TemplateKind.DELETE_SECTION: ("deletesection", "sectiondelete", "sectiondeletion"),
    TemplateKind.NEW_SECTION_CREATION: ("newsectioncreation", "newsection", "sectioncreation"),
    TemplateKind.MERGE_SECTION: ("mergesections", "mergesection", "sectionmerge"),
}

_UPDATE_PREFIXES: Final = {
    UpdateType.ADDITION: ("add",),
    UpdateType.REWRITING: ("rewrit", "refine", "modif", "revis"),
    UpdateType.DELETION: ("delet", "remov"),
}


def _squash(name: str) -> str:
    return re.sub(r"[^a-z]", "", name.lower())


def parse_action_type(action_type: str) -> tuple[TemplateKind, UpdateType | None]:
    """Normalize an action type like 'Example Update- Addition' or 'Merge Sections'.

    :return: The action kind and the update type if one was embedded in the name
    :raises InvalidAction: The name matches no known action type
    """
    squashed = _squash(action_type)
    for kind, aliases in _ALIASES.items():
        for alias in aliases:
            if squashed.startswith(alias):
                remainder = squashed[len(alias) :]
                return kind, parse_update_type(remainder) if remainder else None
    raise InvalidAction(f"Unknown action type {action_type!r}")


def parse_update_type(update_type: str) -> UpdateType | None:
    squashed = _squash(update_type)
    for candidate, prefixes in _UPDATE_PREFIXES.items():
        if squashed.startswith(prefixes):
            return candidate
    return None


class UpdatedSection(BaseModel):
    key: str = "body"
    value: Any = ""


class ActionDetails(BaseModel):
    model_config = ConfigDict(extra="allow")

    section_reference: str | None = None
    new_position: str | None = None
    updated_section: UpdatedSection | None = None
    update_type: str | None = None
    update_examples_instruction: str = ""
    resolved_examples: list[str] | None = None
    new_section_structure: dict[str, Any] | None = None
    section_reference_merged: list[str] = Field(default_factory=list)
    section_position: str | None = None


class WireAction(BaseModel):
    """One entry of the actor's "actions" array."""

    model_config = ConfigDict(extra="allow")

    action_type: str
    action_details: ActionDetails = Field(default_factory=ActionDetails)
    action_explanation: str = ""


class ActorReply(BaseModel):
    actions: list[Any] = Field(default_factory=list)


def _path(value: str | None, field: str) -> NodePath:
    path = NodePath.from_text(value or "")
    if not path:
        raise InvalidAction(f"Missing {field}")
    return path


def action_from_wire(data: dict[str, Any]) -> EditAction:
    """Build an edit action from one entry of the actor's JSON output.

    :raises InvalidAction: The entry is malformed or names an unknown action type
    """
    try:
        wire = WireAction.model_validate(data)
    except ValidationError as e:
        raise InvalidAction(f"Malformed action: {e.errors()[0]['msg']}") from e

    kind, embedded_update = parse_action_type(wire.action_type)
    details = wire.action_details
    explanation = wire.action_explanation

    match kind:
        case TemplateKind.SECTION_REORDER:
            return SectionReorder(
                section_reference=_path(details.section_reference, "section_reference"),
                new_position=_path(details.new_position, "new_position"),
                explanation=explanation,
            )
        case TemplateKind.SECTION_REPHRASE:
            updated = details.updated_section or UpdatedSection()
            return SectionRephrase(
                section_reference=_path(details.section_reference, "section_reference"),
                updated_key=updated.key,
                updated_value=updated.value,
                explanation=explanation,
            )
        case TemplateKind.EXAMPLE_UPDATE:
            update_type = parse_update_type(details.update_type or "") or embedded_update
            if update_type is None:
                raise InvalidAction(f"Unknown update type {details.update_type!r}")
            return ExampleUpdate(
                section_reference=_path(details.section_reference, "section_reference"),
                update_type=update_type,
                instruction=details.update_examples_instruction,
                resolved_examples=details.resolved_examples,
                explanation=explanation,
            )
        case TemplateKind.DELETE_SECTION:
            return DeleteSection(
                section_reference=_path(details.section_reference, "section_reference"),
                explanation=explanation,
            )
        case TemplateKind.NEW_SECTION_CREATION:
            return NewSectionCreation(
                section_position=_path(details.section_position, "section_position"),
                new_section_structure=details.new_section_structure or {},
                explanation=explanation,
            )
        case TemplateKind.MERGE_SECTION:
            if len(details.section_reference_merged) != 2:
                raise InvalidAction("A merge needs exactly two section references")
            first, second = (
                _path(reference, "section_reference_merged")
                for reference in details.section_reference_merged
            )
            return MergeSection(
                section_reference_merged=(first, second),
                section_position=_path(
                    details.section_position or details.section_reference_merged[0],
                    "section_position",
                ),
                new_section_structure=details.new_section_structure or {},
                explanation=explanation,
            )


def actions_from_reply(value: Any) -> tuple[list[EditAction], list[str]]:
    """Parse the actor's reply object into actions, collecting reasons for rejected entries."""
    if isinstance(value, list):
        value = {"actions": value}
    try:
        reply = ActorReply.model_validate(value)
    except ValidationError as e:
        raise InvalidAction("The reply has no 'actions' list") from e

    actions: list[EditAction] = []
    rejected: list[str] = []
    for index, entry in enumerate(reply.actions):
        try:
            actions.append(action_from_wire(entry))
        except InvalidAction as e:
            _logger.warning("Rejecting action %d of the reply: %s", index, e)
            rejected.append(f"action {index}: {e}")
    return actions, rejected


def action_to_wire(action: EditAction) -> dict[str, Any]:
    """Serialize an action in the actor's output schema (plus resolved examples, if any)."""
    details: dict[str, Any]
    match action:
        case SectionReorder():
            details = {
                "section_reference": str(action.section_reference),
                "new_position": str(action.new_position),
            }
        case SectionRephrase():
            details = {
                "section_reference": str(action.section_reference),
                "updated_section": {"key": action.updated_key, "value": action.updated_value},
            }
        case ExampleUpdate():
            details = {
                "section_reference": str(action.section_reference),
                "update_type": str(action.update_type),
                "update_examples_instruction": action.instruction,
            }
            if action.resolved_examples is not None:
                details["resolved_examples"] = list(action.resolved_examples)
        case DeleteSection():
            details = {"section_reference": str(action.section_reference)}
        case NewSectionCreation():
            details = {
                "section_position": str(action.section_position),
                "new_section_structure": action.new_section_structure,
            }
        case MergeSection():
            details = {
                "section_reference_merged": [str(p) for p in action.section_reference_merged],
                "section_position": str(action.section_position),
                "new_section_structure": action.new_section_structure,
            }

    return {
        "action_type": str(action.kind),
        "action_details": details,
        "action_explanation": action.explanation,
    }
