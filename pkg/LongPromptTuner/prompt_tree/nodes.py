from __future__ import annotations

import enum
import hashlib
import json
from collections import Counter
from collections.abc import Iterator
from typing import Any, Final

import attrs

BODY_LABEL: Final = "body"
EXAMPLES_LABEL: Final = "Examples"

# repeated once per earlier sibling with the same label, never rendered
_DISAMBIGUATION_MARK: Final = "\u2063"


def display_label(label: str) -> str:
    """The printable form of a child label: the third 'Notes' sibling reads 'Notes#3'."""
    repeats = label.count(_DISAMBIGUATION_MARK)
    base = label.replace(_DISAMBIGUATION_MARK, "")
    return f"{base}#{repeats + 1}" if repeats else base


class NodeKind(enum.Enum):
    ROOT = "root"
    HEADING = "heading"
    BODY = "body"
    EXAMPLES = "examples"
    BULLET = "bullet"
    NUMBERED = "numbered"

    @property
    def is_list_item(self) -> bool:
        return self in (NodeKind.BULLET, NodeKind.NUMBERED)

    @property
    def is_section(self) -> bool:
        """Headings and the root may hold any kind of child."""
        return self in (NodeKind.ROOT, NodeKind.HEADING)


@attrs.define(frozen=True)
class PromptNode:
    kind: NodeKind
    level: int = 0
    title: str = ""
    content: str = ""
    examples: tuple[str, ...] = attrs.field(default=(), converter=tuple)
    children: tuple[PromptNode, ...] = attrs.field(default=(), converter=tuple)

    @property
    def label(self) -> str:
        if self.kind is NodeKind.BODY:
            return BODY_LABEL
        if self.kind is NodeKind.EXAMPLES:
            return EXAMPLES_LABEL
        return self.title

    def child_labels(self) -> list[str]:
        """Labels used to address the children, made unique among siblings."""
        seen: Counter[str] = Counter()
        labels = []
        for child in self.children:
            label = child.label
            labels.append(label + _DISAMBIGUATION_MARK * seen[label])
            seen[label] += 1
        return labels

    def labelled_children(self) -> Iterator[tuple[str, PromptNode]]:
        return zip(self.child_labels(), self.children)

    def child_of_kind(self, kind: NodeKind) -> PromptNode | None:
        return next((child for child in self.children if child.kind is kind), None)

    @property
    def body(self) -> PromptNode | None:
        return self.child_of_kind(NodeKind.BODY)

    @property
    def examples_block(self) -> PromptNode | None:
        return self.child_of_kind(NodeKind.EXAMPLES)


@attrs.define(frozen=True)
class PromptTree:
    """An immutable prompt tree; equality is structural and ignores provenance."""

    root: PromptNode
    source_hash: str = attrs.field(default="", eq=False)
    warnings: tuple[str, ...] = attrs.field(default=(), eq=False, converter=tuple)

    @classmethod
    def from_root(cls, root: PromptNode) -> PromptTree:
        root = renumber(root)
        return cls(root=root, source_hash=content_digest(root))

    @property
    def sections(self) -> list[PromptNode]:
        return [child for child in self.root.children if child.kind is NodeKind.HEADING]

    @property
    def is_unstructured(self) -> bool:
        return not self.sections


@attrs.define(frozen=True)
class NodePath:
    segments: tuple[str, ...] = attrs.field(converter=tuple)

    @classmethod
    def from_text(cls, text: str) -> NodePath:
        """Parse a '> '-joined reference, tolerating quoting left over from JSON replies.

        :param text: A reference like "Error Identification> 1.> body"
        :return: The path; empty when the text holds no segment
        """
        segments = []
        for raw_segment in text.split(">"):
            segment = raw_segment.strip().strip("\"'`,").strip()
            if segment:
                segments.append(segment)
        return cls(segments=tuple(segments))

    def __str__(self) -> str:
        return "> ".join(display_label(segment) for segment in self.segments)

    def __bool__(self) -> bool:
        return bool(self.segments)

    def __len__(self) -> int:
        return len(self.segments)

    @property
    def parent(self) -> NodePath:
        return NodePath(self.segments[:-1])

    def child(self, label: str) -> NodePath:
        return NodePath(self.segments + (label,))

    def is_prefix_of(self, other: NodePath) -> bool:
        return other.segments[: len(self.segments)] == self.segments


def renumber(node: PromptNode) -> PromptNode:
    """Relabel bullet items '1.', '2.', ... by their position among list-item siblings.

    Unchanged subtrees are returned as the identical objects.
    """
    new_children = []
    ordinal = 0
    changed = False
    for child in node.children:
        new_child = renumber(child) if child.children else child
        if child.kind.is_list_item:
            ordinal += 1
            if child.kind is NodeKind.BULLET and child.title != f"{ordinal}.":
                new_child = attrs.evolve(new_child, title=f"{ordinal}.")
        changed = changed or new_child is not child
        new_children.append(new_child)

    return attrs.evolve(node, children=new_children) if changed else node


def iter_nodes(node: PromptNode) -> Iterator[PromptNode]:
    yield node
    for child in node.children:
        yield from iter_nodes(child)


def subtree_size(node: PromptNode) -> int:
    return sum(1 for _ in iter_nodes(node))


def node_to_dict(node: PromptNode) -> dict[str, Any]:
    data: dict[str, Any] = {"kind": node.kind.value}
    if node.level:
        data["level"] = node.level
    if node.title:
        data["title"] = node.title
    if node.content:
        data["content"] = node.content
    if node.examples:
        data["examples"] = list(node.examples)
    if node.children:
        data["children"] = [node_to_dict(child) for child in node.children]
    return data


def node_from_dict(data: dict[str, Any]) -> PromptNode:
    return PromptNode(
        kind=NodeKind(data["kind"]),
        level=data.get("level", 0),
        title=data.get("title", ""),
        content=data.get("content", ""),
        examples=data.get("examples", ()),
        children=[node_from_dict(child) for child in data.get("children", ())],
    )


def content_digest(root: PromptNode) -> str:
    payload = json.dumps(node_to_dict(root), ensure_ascii=False, sort_keys=True)
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def text_digest(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def structural_equal(first: PromptTree, second: PromptTree) -> bool:
    """Same nodes in the same order, whatever text or provenance the trees came from."""
    return first.root == second.root
