from __future__ import annotations

import json
import re
from typing import Any, Final

from llm.errors import NoParseableBlock

_FENCE: Final = re.compile(r"```[ \t]*(?:json|JSON)?[ \t]*\n?(.*?)```", re.DOTALL)
_VALUE_START: Final = re.compile(r"[\[{]")
_DECODER: Final = json.JSONDecoder()


def extract_json_block(reply: str) -> Any:
    """Parse the first JSON object or array in an LLM reply.

    Fenced blocks are tried before the raw reply. Each candidate is parsed as is and, if
    that fails, again after `repair_json`.

    :raises NoParseableBlock: Nothing in the reply parses
    """
    candidates = [match.group(1) for match in _FENCE.finditer(reply)]
    candidates.append(reply)

    for candidate in candidates:
        for start in _VALUE_START.finditer(candidate):
            text = candidate[start.start() :]
            for attempt in (text, repair_json(text)):
                try:
                    value, _ = _DECODER.raw_decode(attempt)
                except json.JSONDecodeError:
                    continue
                return value

    raise NoParseableBlock(f"No JSON value in reply: {reply[:80]!r}")


def repair_json(text: str) -> str:
    """Drop trailing commas and escape raw newlines and tabs inside strings."""
    repaired: list[str] = []
    in_string = False
    escaped = False

    for index, char in enumerate(text):
        if in_string:
            if escaped:
                escaped = False
            elif char == "\\":
                escaped = True
            elif char == '"':
                in_string = False
            elif char == "\n":
                char = "\\n"
            elif char == "\t":
                char = "\\t"
            elif char == "\r":
                continue
        elif char == '"':
            in_string = True
        elif char == "," and text[index + 1 :].lstrip()[:1] in ("]", "}"):
            continue
        repaired.append(char)

    return "".join(repaired)
