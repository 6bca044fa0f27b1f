from __future__ import annotations

import enum
import hashlib
import json
from typing import Any, Final

import attrs
from pydantic import BaseModel, ConfigDict, field_validator

from prompt_tree.nodes import NodePath
from prompt_tree.paths import IndexPath

RESIDUE_GROUP_ID: Final = "residue"


class ReflectionKind(enum.StrEnum):
    STRUCTURAL = "Structural"
    ERROR = "Error"
    CLUSTER = "Cluster"


def _as_text_list(value: Any) -> Any:
    if value is None:
        return []
    if isinstance(value, str):
        return [value] if value.strip() else []
    return value


class StructuralFeedback(BaseModel):
    model_config = ConfigDict(extra="ignore")

    prompt_examination: str = ""
    improvement_suggestion: list[str] = []

    @field_validator("improvement_suggestion", mode="before")
    @classmethod
    def _lenient_suggestions(cls, value: Any) -> Any:
        return _as_text_list(value)


class StructuralReply(BaseModel):
    """Reply of the preliminary assessment."""

    model_config = ConfigDict(extra="ignore")

    prompt_feedback: list[StructuralFeedback] = []
    prompt_references: list[str] = []

    @field_validator("prompt_references", mode="before")
    @classmethod
    def _lenient_references(cls, value: Any) -> Any:
        return _as_text_list(value)

    @field_validator("prompt_feedback", mode="before")
    @classmethod
    def _single_entry(cls, value: Any) -> Any:
        return [value] if isinstance(value, dict) else _as_text_list(value)


class ErrorFeedback(BaseModel):
    model_config = ConfigDict(extra="ignore")

    prediction_analysis: str | None = None
    prompt_examination: str = ""
    improvement_suggestions: list[str] = []

    @field_validator("improvement_suggestions", mode="before")
    @classmethod
    def _lenient_suggestions(cls, value: Any) -> Any:
        return _as_text_list(value)


class ErrorReplyItem(BaseModel):
    """One entry of an error assessment, or one cluster of a clustered assessment."""

    model_config = ConfigDict(extra="ignore")

    id: str
    prediction_explanation: str | list[str] = ""
    prompt_feedback: ErrorFeedback = ErrorFeedback()
    prompt_references: list[str] = []

    @field_validator("prompt_references", mode="before")
    @classmethod
    def _lenient_references(cls, value: Any) -> Any:
        return _as_text_list(value)

    @field_validator("id", mode="before")
    @classmethod
    def _id_as_text(cls, value: Any) -> str:
        return str(value)

    @field_validator("prompt_feedback", mode="before")
    @classmethod
    def _feedback_as_suggestions(cls, value: Any) -> Any:
        # some replies give the feedback as a bare list of suggestions
        if isinstance(value, (list, str)):
            return {"improvement_suggestions": _as_text_list(value)}
        return value


@attrs.define(frozen=True)
class Feedback:
    prompt_examination: str = ""
    improvement_suggestions: tuple[str, ...] = attrs.field(default=(), converter=tuple)
    prediction_analysis: str | None = None

    def as_list(self) -> list[str]:
        entries = [self.prediction_analysis or "", self.prompt_examination]
        return [entry for entry in entries if entry] + list(self.improvement_suggestions)


@attrs.define(frozen=True)
class Reference:
    """A prompt reference matched against the tree it was made about."""

    path: NodePath
    index_path: IndexPath
    corrected: bool = False


@attrs.define(frozen=True)
class Reflection:
    kind: ReflectionKind
    feedback: Feedback
    references: tuple[Reference, ...] = attrs.field(default=(), converter=tuple)
    unresolved_references: tuple[str, ...] = attrs.field(default=(), converter=tuple)
    example_ids: tuple[str, ...] = attrs.field(default=(), converter=tuple)
    prediction_explanation: str | tuple[str, ...] = ""

    def __attrs_post_init__(self) -> None:
        if self.kind is ReflectionKind.ERROR and not self.example_ids:
            raise ValueError("An error reflection needs at least one example id")
        if self.kind is ReflectionKind.STRUCTURAL and self.example_ids:
            raise ValueError("A structural reflection carries no example ids")

    @property
    def node_paths(self) -> list[NodePath]:
        return [reference.path for reference in self.references]

    def to_feedback_json(self) -> dict[str, Any]:
        """The critic-feedback shape the actor template reads."""
        explanation = self.prediction_explanation
        return {
            "id": ", ".join(self.example_ids) or str(self.kind).lower(),
            "prediction_explanation": list(explanation)
            if isinstance(explanation, tuple)
            else explanation,
            "prompt_feedback": self.feedback.as_list(),
            "prompt_references": [str(path) for path in self.node_paths],
        }

    @property
    def digest(self) -> str:
        payload = json.dumps(self.to_feedback_json(), ensure_ascii=False, sort_keys=True)
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:16]


@attrs.define(frozen=True)
class ReflectionGroup:
    """Reflections the actor handles together.

    A group without references (the residue of reflections whose references all failed to
    resolve) is shown the whole prompt instead of an induced subtree.
    """

    group_id: str
    members: tuple[Reflection, ...] = attrs.field(converter=tuple)
    merged_references: tuple[NodePath, ...] = attrs.field(default=(), converter=tuple)

    @property
    def is_residue(self) -> bool:
        return not self.merged_references

    def to_feedback_json(self) -> list[dict[str, Any]]:
        return [member.to_feedback_json() for member in self.members]


@attrs.define(frozen=True)
class ErrorAssessment:
    reflections: tuple[Reflection, ...] = attrs.field(converter=tuple)
    uncovered_ids: tuple[str, ...] = attrs.field(default=(), converter=tuple)
