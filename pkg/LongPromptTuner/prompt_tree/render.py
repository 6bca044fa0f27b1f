from __future__ import annotations

import logging
import re
from typing import Any, Final

from prompt_tree.errors import DuplicateSiblingTitle
from prompt_tree.nodes import (
    _DISAMBIGUATION_MARK,
    BODY_LABEL,
    EXAMPLES_LABEL,
    NodeKind,
    PromptNode,
    PromptTree,
)
from prompt_tree.parser import split_examples

_logger = logging.getLogger(f"tuner.{__name__}")

_ITEM_KEY: Final = re.compile(r"^\d+\.$")


def render_markdown(tree: PromptTree) -> str:
    """Render a tree to its canonical text form."""
    lines: list[str] = []
    _render_node(tree.root, lines)
    return "\n".join(lines).strip("\n")


def _render_node(node: PromptNode, lines: list[str]) -> None:
    match node.kind:
        case NodeKind.HEADING:
            if lines:
                lines.append("")
            lines.append(f"{'#' * node.level} {node.title}")
        case NodeKind.BODY:
            lines.append(node.content)
        case NodeKind.EXAMPLES:
            lines.append("Examples: " + ", ".join(f"{{{entry}}}" for entry in node.examples))
        case NodeKind.BULLET:
            lines.append(f"* {node.content}".rstrip())
        case NodeKind.NUMBERED:
            lines.append(f"{node.title} {node.content}".rstrip())

    for child in node.children:
        _render_node(child, lines)


def render_node(node: PromptNode) -> str:
    """Render a single subtree, e.g. one section for a diff."""
    lines: list[str] = []
    _render_node(node, lines)
    return "\n".join(lines).strip("\n")


def to_template_json(tree: PromptTree, *, strict: bool = False) -> dict[str, Any]:
    """Convert a tree to the nested mapping shown to the critic and the actor.

    :param tree: The prompt tree
    :param strict: Raise DuplicateSiblingTitle instead of using disambiguated keys
    :return: A mapping of heading titles to nested mappings with 'body', 'Examples'
      and list item keys ('1.', '2.', ...)
    """
    return _section_mapping(tree.root, strict=strict)


def node_to_template_json(node: PromptNode) -> dict[str, Any]:
    """The mapping form of one heading or list item, keyed by its own label."""
    mapping = _section_mapping(node, strict=False)
    if node.kind.is_list_item:
        mapping = {BODY_LABEL: node.content} | mapping
    return {node.label: mapping} if node.kind is not NodeKind.ROOT else mapping


def _section_mapping(node: PromptNode, *, strict: bool) -> dict[str, Any]:
    mapping: dict[str, Any] = {}
    for label, child in node.labelled_children():
        if strict and label != child.label:
            raise DuplicateSiblingTitle(f"Two siblings are labelled {child.label!r}")

        match child.kind:
            case NodeKind.BODY:
                mapping[label] = child.content
            case NodeKind.EXAMPLES:
                mapping[label] = list(child.examples)
            case NodeKind.BULLET | NodeKind.NUMBERED:
                mapping[label] = {BODY_LABEL: child.content} | _section_mapping(
                    child, strict=strict
                )
            case _:
                mapping[label] = _section_mapping(child, strict=strict)
    return mapping


def from_template_json(
    mapping: dict[str, Any], *, list_style: NodeKind = NodeKind.BULLET
) -> PromptTree:
    """Build a tree from the nested mapping form (inverse of to_template_json).

    :param mapping: The nested mapping
    :param list_style: Node kind for list item keys ('1.', '2.', ...)
    :return: The tree
    """
    root = PromptNode(kind=NodeKind.ROOT, children=nodes_from_mapping(mapping, 0, list_style))
    return PromptTree.from_root(root)


def nodes_from_mapping(
    mapping: dict[str, Any], parent_level: int, list_style: NodeKind = NodeKind.BULLET
) -> list[PromptNode]:
    """Convert mapping entries into child nodes of a section at `parent_level`.

    Children are ordered body, examples, list items, headings, so the rendered text parses
    back into the same structure.
    """
    content_nodes: list[PromptNode] = []
    items: list[PromptNode] = []
    headings: list[PromptNode] = []

    for raw_key, value in mapping.items():
        key = raw_key.replace(_DISAMBIGUATION_MARK, "").strip()
        if key == BODY_LABEL:
            if text := _as_text(value):
                content_nodes.append(PromptNode(kind=NodeKind.BODY, content=text))
        elif key == EXAMPLES_LABEL:
            if examples := as_example_list(value):
                content_nodes.append(PromptNode(kind=NodeKind.EXAMPLES, examples=examples))
        elif _ITEM_KEY.match(key):
            items.append(_item_from_value(key, value, list_style))
        else:
            if isinstance(value, dict):
                children = nodes_from_mapping(value, parent_level + 1, list_style)
            else:
                children = [PromptNode(kind=NodeKind.BODY, content=_as_text(value))]
            headings.append(
                PromptNode(
                    kind=NodeKind.HEADING, level=parent_level + 1, title=key, children=children
                )
            )

    return content_nodes + items + headings


def _item_from_value(key: str, value: Any, list_style: NodeKind) -> PromptNode:
    if not isinstance(value, dict):
        return PromptNode(kind=list_style, title=key, content=_as_text(value))

    children = []
    for raw_child_key, child_value in value.items():
        child_key = raw_child_key.replace(_DISAMBIGUATION_MARK, "").strip()
        if child_key == EXAMPLES_LABEL:
            if examples := as_example_list(child_value):
                children.append(PromptNode(kind=NodeKind.EXAMPLES, examples=examples))
        elif child_key != BODY_LABEL:
            _logger.warning("Ignoring key %r nested under list item %r", child_key, key)

    return PromptNode(
        kind=list_style, title=key, content=_as_text(value.get(BODY_LABEL, "")), children=children
    )


def as_example_list(value: Any) -> list[str]:
    """Normalize an 'Examples' value (list or '{a}, {b}' text) to a list of entries."""
    if isinstance(value, str):
        return split_examples(value) or ([value.strip()] if value.strip() else [])
    if not isinstance(value, list):
        return []

    entries = []
    for entry in value:
        text = _as_text(entry).strip()
        if text.startswith("{") and text.endswith("}"):
            text = text[1:-1].strip()
        if text:
            entries.append(text)
    return entries


def _as_text(value: Any) -> str:
    if isinstance(value, str):
        return value.strip()
    if isinstance(value, list):
        return "\n".join(_as_text(entry) for entry in value)
    return "" if value is None else str(value)
