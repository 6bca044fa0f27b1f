"""Turning example-update instructions into concrete example strings."""

from __future__ import annotations

import json
import logging
import re
from typing import Final

import attrs

from actions.engine import ExampleHost, example_host
from actions.errors import GenerationUnparseable
from actions.models import ExampleUpdate, UpdateType
from llm.gateway import Gateway
from llm.models import Tag
from llm.templates import fill_template
from prompt_tree.nodes import PromptTree
from prompt_tree.render import node_to_template_json

_logger = logging.getLogger(f"tuner.{__name__}")

_BRACED: Final = re.compile(r"\{([^{}]+)\}")
_QUOTED: Final = re.compile(r"'([^']+)'|\"([^\"]+)\"")


def parse_inline_examples(text: str, *, remaining: int | None = None) -> list[str]:
    """Brace-delimited entries of a text, de-duplicated, optionally clamped to `remaining`."""
    entries: list[str] = []
    for match in _BRACED.finditer(text):
        entry = match.group(1).strip()
        if entry and entry not in entries:
            entries.append(entry)

    if remaining is not None and len(entries) > remaining:
        _logger.warning("Clamping %d examples to the remaining %d", len(entries), remaining)
        entries = entries[:remaining]
    return entries


def _quoted_existing(instruction: str, host: ExampleHost) -> list[str]:
    """Existing examples the instruction quotes verbatim, in block order."""
    quoted = {
        (single or double).strip() for single, double in _QUOTED.findall(instruction)
    }
    return [
        example for example in host.examples if example in quoted or f"{{{example}}}" in instruction
    ]


async def materialize_examples(
    action: ExampleUpdate,
    tree: PromptTree,
    gateway: Gateway,
    *,
    fuzzy: bool = False,
) -> ExampleUpdate:
    """Resolve an example update's instruction into concrete entries.

    Entries are taken from braces in the instruction when there are any. A deletion that
    quotes existing examples resolves to those. Everything else costs one generation
    request. Additions are clamped to the capacity left in the target block.

    :param action: An example update without resolved examples
    :param tree: The tree the action will be applied to
    :param gateway: Used only when the instruction names no entries itself
    :param fuzzy: Correct a mistyped section reference
    :return: The action with `resolved_examples` set
    :raises PathNotFound: The reference does not resolve
    :raises GenerationUnparseable: The generated reply holds no brace-delimited entries
    """
    if action.resolved_examples is not None:
        return action

    host = example_host(tree, action.section_reference, fuzzy=fuzzy)
    is_addition = action.update_type is UpdateType.ADDITION
    remaining = host.remaining_capacity if is_addition else None

    if is_addition and remaining == 0:
        _logger.warning(
            "'%s' already holds %d examples, nothing to add",
            action.section_reference,
            len(host.examples),
        )
        return attrs.evolve(action, resolved_examples=())

    if action.update_type is UpdateType.DELETION:
        if quoted := _quoted_existing(action.instruction, host):
            return attrs.evolve(action, resolved_examples=quoted)

    if inline := parse_inline_examples(action.instruction, remaining=remaining):
        return attrs.evolve(action, resolved_examples=inline)

    user_text = fill_template(
        "example_materialize",
        section_json=json.dumps(node_to_template_json(host.node), ensure_ascii=False),
        update_type=str(action.update_type),
        instruction=action.instruction,
        capacity=str(remaining if remaining is not None else len(host.examples) or 1),
    )
    reply = await gateway.ask(Tag.EXAMPLE_MATERIALIZE, user_text)

    entries = parse_inline_examples(reply, remaining=remaining)
    if not entries:
        raise GenerationUnparseable(
            f"No examples in the reply for '{action.section_reference}': {reply[:80]!r}"
        )
    return attrs.evolve(action, resolved_examples=entries)
