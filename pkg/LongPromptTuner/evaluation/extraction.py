"""Turn a model reply into a prediction.

Extraction never raises. A reply nothing can be read from yields ABSTAIN, which is scored
as wrong. Where a reply mentions several answers the last one wins, since models tend to
restate the options before answering.
"""

from __future__ import annotations

import logging
import re
from typing import Final

from evaluation.models import ABSTAIN, Extraction, Prediction, TaskSpec
from llm.errors import NoParseableBlock
from llm.json_blocks import extract_json_block

_logger = logging.getLogger(f"tuner.{__name__}")

_OPTION: Final = re.compile(r"\(([A-Z])\)")
_YES_NO: Final = re.compile(r"\b(yes|no)\b", re.IGNORECASE)
_ID_SEPARATOR: Final = re.compile(r"[,;\n]")
_TRUE_TEXT: Final = frozenset({"true", "yes", "1"})


def extract(reply: str, task: TaskSpec) -> Prediction:
    match task.extraction:
        case Extraction.OPTION_LETTER:
            prediction = _option_letter(reply)
        case Extraction.YES_NO:
            prediction = _yes_no(reply)
        case Extraction.VERBATIM_LABEL:
            prediction = _verbatim_label(reply, task.label_set)
        case Extraction.JSON_BOOLEAN_MAP:
            prediction = _json_boolean_map(reply, task.label_set)
        case Extraction.COMMA_SEPARATED_IDS:
            prediction = _comma_separated_ids(reply, task.label_set)

    if isinstance(prediction, str) and prediction not in task.label_set:
        prediction = ABSTAIN
    if prediction == ABSTAIN:
        _logger.debug("Nothing to extract from reply %r", reply[:80])
    return prediction


def _option_letter(reply: str) -> str:
    letters = _OPTION.findall(reply)
    return f"({letters[-1]})" if letters else ABSTAIN


def _yes_no(reply: str) -> str:
    answers = _YES_NO.findall(reply)
    if not answers:
        return ABSTAIN
    leading = reply.lstrip(" \t\n\"'*`").lower()
    for answer in ("yes", "no"):
        if leading.startswith(answer) and not leading[len(answer) : len(answer) + 1].isalnum():
            return answer.capitalize()
    return answers[-1].capitalize()


def _verbatim_label(reply: str, label_set: tuple[str, ...]) -> str:
    folded = reply.casefold()
    best, best_position = ABSTAIN, -1
    # longer labels first so 'not entailment' beats 'entailment' at the same end position
    for label in sorted(label_set, key=len, reverse=True):
        position = folded.rfind(label.casefold())
        if position >= 0 and position + len(label) > best_position:
            best, best_position = label, position + len(label)
    return best


def _json_boolean_map(reply: str, label_set: tuple[str, ...]) -> Prediction:
    try:
        value = extract_json_block(reply)
    except NoParseableBlock:
        return ABSTAIN
    if not isinstance(value, dict):
        return ABSTAIN

    by_folded_key = {str(key).strip().casefold(): flag for key, flag in value.items()}
    chosen = set()
    for label in label_set:
        flag = by_folded_key.get(label.casefold())
        if flag is True or (isinstance(flag, str) and flag.strip().lower() in _TRUE_TEXT):
            chosen.add(label)
    return frozenset(chosen)


def _comma_separated_ids(reply: str, label_set: tuple[str, ...]) -> Prediction:
    by_folded_label = {label.casefold(): label for label in label_set}
    for line in reversed(reply.strip().splitlines()):
        line = line.rsplit(":", 1)[-1]
        tokens = [token.strip(" \t\"'`*.[](){}").casefold() for token in _ID_SEPARATOR.split(line)]
        found = {by_folded_label[token] for token in tokens if token in by_folded_label}
        if found:
            return frozenset(found)
    return ABSTAIN
