from __future__ import annotations

import logging
import re
import warnings
from typing import Final

import attrs
from markdown_it import MarkdownIt

from prompt_tree.errors import EmptyInput, MalformedStructure
from prompt_tree.nodes import NodeKind, PromptNode, PromptTree, renumber, text_digest

_logger = logging.getLogger(f"tuner.{__name__}")

_BULLET: Final = re.compile(r"^\*(?:\s+(.*))?$")
_NUMBERED: Final = re.compile(r"^(\d+)\.(?:\s+(.*))?$")
_EXAMPLES: Final = re.compile(r"^Examples:\s*(.*)$")
_EXAMPLE_SEPARATOR: Final = re.compile(r"\}\s*,\s*\{")

# only ATX headings and fences are structural, everything else is scanned line by line
_block_scanner = MarkdownIt("zero").enable(["heading", "fence"])


def split_examples(text: str) -> list[str]:
    """Split '{a}, {b}' into its entries, keeping braces inside an entry verbatim.

    :param text: The text after 'Examples:'
    :return: The non-empty entries, or an empty list if the text is not a brace group list
    """
    text = text.strip()
    if not (text.startswith("{") and text.endswith("}")):
        return []
    entries = (entry.strip() for entry in _EXAMPLE_SEPARATOR.split(text[1:-1]))
    return [entry for entry in entries if entry]


@attrs.define
class _Draft:
    kind: NodeKind
    level: int = 0
    title: str = ""
    lines: list[str] = attrs.Factory(list)
    examples: list[str] = attrs.Factory(list)
    children: list[_Draft] = attrs.Factory(list)

    def add_text(self, line: str, *, after_blank: bool) -> None:
        if self.lines and after_blank:
            self.lines.append("")
        self.lines.append(line)

    def child(self, kind: NodeKind) -> _Draft:
        existing = next((child for child in self.children if child.kind is kind), None)
        if existing is None:
            existing = _Draft(kind=kind)
            self.children.append(existing)
        return existing

    def freeze(self) -> PromptNode:
        return PromptNode(
            kind=self.kind,
            level=self.level,
            title=self.title,
            content="\n".join(self.lines),
            examples=self.examples,
            children=[child.freeze() for child in self.children],
        )


def _scan_blocks(text: str) -> tuple[dict[int, tuple[int, str]], set[int]]:
    """Find heading lines (line -> (level, title)) and lines inside fenced code."""
    headings: dict[int, tuple[int, str]] = {}
    fenced: set[int] = set()

    tokens = _block_scanner.parse(text)
    for index, token in enumerate(tokens):
        if token.map is None:
            continue
        if token.type == "heading_open":
            title = tokens[index + 1].content.strip()
            headings[token.map[0]] = (len(token.markup), title)
        elif token.type == "fence":
            fenced.update(range(*token.map))

    return headings, fenced


def parse_markdown(text: str) -> PromptTree:
    """Parse a structured prompt into a tree.

    Every line ends up in exactly one node: '#' headings open sections, '* ' lines are
    bullet items, 'N. ' lines numbered items, 'Examples: {..}, {..}' lines example blocks,
    and everything else is prose. Prose following a list item continues that item; an
    'Examples:' line following a list item belongs to that item.

    A section holds one body. Prose after a section's 'Examples:' line joins that body,
    so rendering moves it above the examples; parsing the rendered text again gives the
    same tree.

    :param text: The prompt text
    :return: The parsed tree
    """
    if not text.strip():
        raise EmptyInput("Cannot parse an empty prompt")

    text = text.replace("\r\n", "\n")
    headings, fenced = _scan_blocks(text)

    root = _Draft(kind=NodeKind.ROOT)
    stack: list[_Draft] = [root]
    last_item: _Draft | None = None
    after_blank = False
    parse_warnings: list[str] = []

    for line_number, raw_line in enumerate(text.split("\n")):
        line = raw_line.rstrip()
        section = stack[-1]
        host = last_item if last_item is not None else section

        if line_number in fenced:
            prose = last_item if last_item is not None else section.child(NodeKind.BODY)
            prose.add_text(line, after_blank=after_blank)
            after_blank = False
            continue

        if line_number in headings:
            level, title = headings[line_number]
            while stack[-1].level >= level and len(stack) > 1:
                stack.pop()
            parent = stack[-1]
            if level > parent.level + 1:
                message = (
                    f"Line {line_number + 1}: heading {title!r} jumps from level {parent.level}"
                    f" to {level}, clamped to {parent.level + 1}"
                )
                parse_warnings.append(message)
                warnings.warn(message, MalformedStructure, stacklevel=2)
                _logger.warning(message)
                level = parent.level + 1

            heading = _Draft(kind=NodeKind.HEADING, level=level, title=title)
            parent.children.append(heading)
            stack.append(heading)
            last_item = None
            after_blank = False
            continue

        stripped = line.strip()
        if not stripped:
            after_blank = True
            continue

        if (match := _EXAMPLES.match(stripped)) and (entries := split_examples(match[1])):
            host.child(NodeKind.EXAMPLES).examples.extend(entries)
        elif match := _BULLET.match(stripped):
            last_item = _Draft(kind=NodeKind.BULLET, lines=[match[1] or ""])
            section.children.append(last_item)
        elif match := _NUMBERED.match(stripped):
            last_item = _Draft(kind=NodeKind.NUMBERED, title=f"{match[1]}.", lines=[match[2] or ""])
            section.children.append(last_item)
        elif last_item is not None:
            last_item.add_text(line, after_blank=after_blank)
        else:
            section.child(NodeKind.BODY).add_text(line, after_blank=after_blank)
        after_blank = False

    return PromptTree(
        root=renumber(root.freeze()),
        source_hash=text_digest(text),
        warnings=parse_warnings,
    )
