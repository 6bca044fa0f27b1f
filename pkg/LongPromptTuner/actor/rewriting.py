"""Whole-prompt rewrites: rephrasing a candidate and structuring a flat prompt."""

from __future__ import annotations

import logging
import re
from collections.abc import Sequence
from typing import Final

from actor.errors import ClassNamesAltered
from llm.gateway import Gateway
from llm.models import Tag
from llm.templates import fill_template
from prompt_tree.nodes import PromptTree
from prompt_tree.parser import parse_markdown
from prompt_tree.render import render_markdown

_logger = logging.getLogger(f"tuner.{__name__}")

_MARKDOWN_FENCE: Final = re.compile(r"```[ \t]*(?:markdown|md)?[ \t]*\n(.*?)```", re.DOTALL)


def markdown_block(reply: str) -> str:
    """The last fenced block of a reply, or the whole reply when it has none."""
    blocks = _MARKDOWN_FENCE.findall(reply)
    return blocks[-1].strip() if blocks else reply.strip()


def missing_labels(original: str, rewritten: str, labels: Sequence[str]) -> list[str]:
    """Labels the original text names that the rewritten text no longer does."""
    return [label for label in labels if label in original and label not in rewritten]


async def rephrase_candidate(
    tree: PromptTree, labels: Sequence[str], gateway: Gateway
) -> PromptTree:
    """Ask for a thoroughly rewritten version of the prompt with the same output classes.

    :param tree: The prompt to rewrite
    :param labels: The task's label set; every label the prompt names must survive
    :param gateway: Where the rewrite comes from
    :return: The rewritten prompt, parsed
    :raises ClassNamesAltered: The rewrite dropped or renamed an output class
    :raises EmptyInput: The reply held no prompt text
    """
    original = render_markdown(tree)
    reply = await gateway.ask(Tag.REPHRASE, fill_template("rephrase", prompt_text=original))
    rewritten = markdown_block(reply)

    if missing := missing_labels(original, rewritten, labels):
        raise ClassNamesAltered(f"The rephrased prompt no longer names {', '.join(missing)}")

    rephrased = parse_markdown(rewritten)
    _logger.info("Rephrased prompt into %d top-level sections", len(rephrased.sections))
    return rephrased


async def structure_prompt(text: str, gateway: Gateway) -> PromptTree:
    """Rewrite a prompt without headings into markdown sections, keeping its content.

    :raises EmptyInput: The reply held no prompt text
    """
    reply = await gateway.ask(Tag.STRUCTURING, fill_template("structuring", InitialPrompt=text))
    tree = parse_markdown(markdown_block(reply))
    if tree.is_unstructured:
        _logger.warning("The structured prompt still has no headings")
    return tree
