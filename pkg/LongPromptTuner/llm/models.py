from __future__ import annotations

import enum
import hashlib

import attrs
from pydantic import BaseModel, ConfigDict, Field


class Tag(enum.StrEnum):
    """The role a generation request plays in the pipeline."""

    CRITIC_STRUCTURAL = "CriticStructural"
    CRITIC_ERROR = "CriticError"
    CRITIC_CLUSTER = "CriticCluster"
    ACTOR = "Actor"
    EXAMPLE_MATERIALIZE = "ExampleMaterialize"
    REPHRASE = "Rephrase"
    STRUCTURING = "Structuring"
    EVALUATION = "Evaluation"
    COMPARE_JUDGE = "CompareJudge"


class GenerationRequest(BaseModel):
    model_config = ConfigDict(frozen=True)

    tag: Tag
    user_text: str
    system_text: str = ""
    temperature: float = Field(default=0.0, ge=0.0, le=1.0)
    max_output: int = Field(default=4096, gt=0)

    def digest(self, backend_id: str) -> str:
        """Content address of this request as sent to the given backend."""
        payload = f"{backend_id}\n{self.model_dump_json()}"
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()


@attrs.define(frozen=True)
class BackendReply:
    text: str
    input_tokens: int | None = None
    output_tokens: int | None = None
