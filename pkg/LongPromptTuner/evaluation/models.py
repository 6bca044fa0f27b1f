from __future__ import annotations

import enum
import re
from collections.abc import Mapping
from typing import Any, Final

import attrs
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

ABSTAIN: Final = "<abstain>"
DEFAULT_INPUT_WRAPPER: Final = "{prompt}\n\nInput: {input}"

_OPTION_LABEL: Final = re.compile(r"^\([A-Z]\)$")

Prediction = str | frozenset[str]


class Metric(enum.StrEnum):
    ACCURACY = "Accuracy"
    MACRO_F1 = "MacroF1"
    MULTI_LABEL_ACCURACY = "MultiLabelAccuracy"
    MULTI_LABEL_MACRO_F1 = "MultiLabelMacroF1"

    @property
    def is_multi_label(self) -> bool:
        return self in (Metric.MULTI_LABEL_ACCURACY, Metric.MULTI_LABEL_MACRO_F1)


class Extraction(enum.StrEnum):
    OPTION_LETTER = "OptionLetter"
    YES_NO = "YesNo"
    VERBATIM_LABEL = "VerbatimLabel"
    JSON_BOOLEAN_MAP = "JsonBooleanMap"
    COMMA_SEPARATED_IDS = "CommaSeparatedIds"

    @property
    def is_multi_label(self) -> bool:
        return self in (Extraction.JSON_BOOLEAN_MAP, Extraction.COMMA_SEPARATED_IDS)


class Split(enum.StrEnum):
    TRAIN = "Train"
    VAL = "Val"
    TEST = "Test"


class TaskSpec(BaseModel):
    """What a task's answers look like and how they are scored.

    `input_wrapper` joins prompt and input; its ``{prompt}`` and ``{input}`` placeholders
    are replaced literally, so braces elsewhere in the prompt are left alone.
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    name: str
    label_set: tuple[str, ...] = Field(min_length=1)
    metric: Metric = Metric.ACCURACY
    extraction: Extraction = Extraction.OPTION_LETTER
    input_wrapper: str = DEFAULT_INPUT_WRAPPER

    @model_validator(mode="after")
    def _check_extraction(self) -> TaskSpec:
        if self.extraction.is_multi_label != self.metric.is_multi_label:
            raise ValueError(f"{self.extraction} extraction does not fit the {self.metric} metric")
        if self.extraction is Extraction.OPTION_LETTER:
            if bad := [label for label in self.label_set if not _OPTION_LABEL.match(label)]:
                raise ValueError(f"Option labels must look like '(A)', got {bad}")
        if self.extraction is Extraction.YES_NO and not {"Yes", "No"} <= set(self.label_set):
            raise ValueError("YesNo extraction needs 'Yes' and 'No' in the label set")
        if "{input}" not in self.input_wrapper:
            raise ValueError("The input wrapper has no {input} placeholder")
        return self

    def wrap(self, prompt_text: str, input_text: str) -> str:
        if "{prompt}" not in self.input_wrapper:
            return prompt_text + self.input_wrapper.replace("{input}", input_text)
        return self.input_wrapper.replace("{prompt}", prompt_text).replace("{input}", input_text)


class ExampleRecord(BaseModel):
    """One labelled example; `gold` is a label, or a label set for multi-label tasks."""

    model_config = ConfigDict(frozen=True, populate_by_name=True)

    id: str
    input: str
    gold: str | frozenset[str] = Field(alias="label")
    split: Split = Split.TRAIN

    @field_validator("id", mode="before")
    @classmethod
    def _id_as_text(cls, value: Any) -> str:
        return str(value)

    @property
    def gold_labels(self) -> frozenset[str]:
        return self.gold if isinstance(self.gold, frozenset) else frozenset([self.gold])


def prediction_labels(prediction: Prediction) -> frozenset[str]:
    """The labels a prediction claims; abstaining claims none."""
    if isinstance(prediction, frozenset):
        return prediction
    return frozenset() if prediction == ABSTAIN else frozenset([prediction])


def prediction_to_text(prediction: Prediction) -> str:
    if isinstance(prediction, frozenset):
        return ", ".join(sorted(prediction))
    return prediction


@attrs.define(frozen=True)
class LabelTally:
    true_positives: int = 0
    false_positives: int = 0
    false_negatives: int = 0

    @property
    def f1(self) -> float:
        denominator = 2 * self.true_positives + self.false_positives + self.false_negatives
        return 2 * self.true_positives / denominator if denominator else 0.0


@attrs.define(frozen=True)
class ExampleOutcome:
    id: str
    prediction: Prediction
    correct: bool


@attrs.define(frozen=True)
class EvalResult:
    score: float
    per_example: tuple[ExampleOutcome, ...] = attrs.field(converter=tuple)
    confusion: Mapping[str, LabelTally]

    @property
    def sample_size(self) -> int:
        return len(self.per_example)

    @property
    def accuracy(self) -> float:
        return sum(outcome.correct for outcome in self.per_example) / self.sample_size


@attrs.define(frozen=True)
class Misclassified:
    """A wrong prediction, ready to be shown to the critic."""

    id: str
    input: str
    gold: str | frozenset[str]
    prediction: Prediction

    def to_input_data(self) -> dict[str, str]:
        return {
            "id": self.id,
            "input": self.input,
            "prediction": prediction_to_text(self.prediction),
            "ground_truth": prediction_to_text(self.gold),
        }
