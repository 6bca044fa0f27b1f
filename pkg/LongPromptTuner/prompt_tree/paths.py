from __future__ import annotations

import logging
import re
from collections.abc import Iterable, Iterator, Sequence
from typing import Final

import attrs
from rapidfuzz.distance import Levenshtein
from unidecode import unidecode

from prompt_tree.errors import AmbiguousPath, PathNotFound
from prompt_tree.nodes import (
    _DISAMBIGUATION_MARK,
    BODY_LABEL,
    EXAMPLES_LABEL,
    NodeKind,
    NodePath,
    PromptNode,
    PromptTree,
    content_digest,
    display_label,
)

_logger = logging.getLogger(f"tuner.{__name__}")

FUZZY_THRESHOLD: Final = 0.34

IndexPath = tuple[int, ...]

_WHITESPACE: Final = re.compile(r"\s+")


@attrs.define(frozen=True)
class ResolvedPath:
    """A path matched against a concrete tree.

    `index_path` locates `node` by child positions from the root. A trailing 'body'
    segment under a list item, or under a heading without a body, addresses that node itself.
    """

    path: NodePath
    index_path: IndexPath
    node: PromptNode
    corrected: bool = False

    @property
    def addresses_body(self) -> bool:
        """True when the path ends in 'body' but names the item or heading holding it."""
        return self.node.kind is not NodeKind.BODY and self.path.segments[-1] == BODY_LABEL


def normalize_label(label: str) -> str:
    label = unidecode(label.replace(_DISAMBIGUATION_MARK, "")).lower()
    label = _WHITESPACE.sub(" ", label).strip()
    return label.rstrip(".:").strip()


def _label_distance(segment: str, label: str) -> float:
    return Levenshtein.normalized_distance(normalize_label(segment), normalize_label(label))


def _candidates(node: PromptNode) -> list[tuple[str, int | None, PromptNode]]:
    """Addressable children as (label, child index, node); index None means the node itself."""
    candidates: list[tuple[str, int | None, PromptNode]] = [
        (label, index, child) for index, (label, child) in enumerate(node.labelled_children())
    ]
    if node.kind.is_list_item or (node.kind is NodeKind.HEADING and node.body is None):
        candidates.insert(0, (BODY_LABEL, None, node))
    return candidates


def resolve_path(
    tree: PromptTree,
    path: NodePath,
    *,
    fuzzy: bool = False,
    threshold: float = FUZZY_THRESHOLD,
) -> ResolvedPath:
    """Resolve a path to exactly one node of the tree.

    Each segment is first matched exactly against the sibling labels. With `fuzzy`, a
    segment without an exact match resolves to the sibling label with the smallest
    normalized edit distance, provided it is within `threshold`.

    :param tree: The tree to resolve against
    :param path: The path, e.g. "Error Identification> 1.> body"
    :param fuzzy: Correct mistyped segments
    :param threshold: Maximum normalized edit distance accepted per segment
    :return: The resolved node, its canonical path and whether a correction occurred
    :raises PathNotFound: A segment matches nothing (within threshold)
    :raises AmbiguousPath: Two sibling labels tie at the minimum distance
    """
    if not path:
        raise PathNotFound("Cannot resolve an empty path")

    node = tree.root
    index_path: IndexPath = ()
    labels: list[str] = []
    corrected = False

    for position, segment in enumerate(path.segments):
        candidates = _candidates(node)
        match = next(
            (c for c in candidates if segment in (c[0], display_label(c[0]))), None
        )
        if match is None:
            match = next(
                (c for c in candidates if c[0].replace(_DISAMBIGUATION_MARK, "") == segment),
                None,
            )

        if match is None and fuzzy:
            match = _closest(candidates, segment, threshold, path)
            if match is not None:
                corrected = True

        if match is None:
            raise PathNotFound(
                f"No node labelled {segment!r} under '{NodePath(labels) or '<root>'}' ({path})"
            )

        label, child_index, child = match
        labels.append(label)
        if child_index is not None:
            index_path += (child_index,)
        node = child

        last = position == len(path.segments) - 1
        if not last and label in (BODY_LABEL, EXAMPLES_LABEL):
            raise PathNotFound(f"{label!r} may only be the last segment of {path}")

    resolved = ResolvedPath(
        path=NodePath(labels), index_path=index_path, node=node, corrected=corrected
    )
    if corrected:
        _logger.info("Corrected path '%s' to '%s'", path, resolved.path)
    return resolved


def _closest(
    candidates: list[tuple[str, int | None, PromptNode]],
    segment: str,
    threshold: float,
    path: NodePath,
) -> tuple[str, int | None, PromptNode] | None:
    scored = sorted(
        ((_label_distance(segment, c[0]), order) for order, c in enumerate(candidates)),
        key=lambda pair: pair[0],
    )
    if not scored or scored[0][0] > threshold:
        return None

    best_distance, best_order = scored[0]
    if len(scored) > 1 and scored[1][0] == best_distance:
        tied = [candidates[order][0] for distance, order in scored if distance == best_distance]
        raise AmbiguousPath(f"{segment!r} in {path} is equally close to {tied}")
    return candidates[best_order]


def enumerate_paths(tree: PromptTree) -> list[tuple[NodePath, PromptNode]]:
    """All nodes except the root with their canonical paths, in pre-order."""
    return list(_walk(tree.root, NodePath(())))


def _walk(node: PromptNode, prefix: NodePath) -> Iterator[tuple[NodePath, PromptNode]]:
    for label, child in node.labelled_children():
        path = prefix.child(label)
        yield path, child
        yield from _walk(child, path)


def index_path_of(tree: PromptTree, path: NodePath) -> IndexPath:
    return resolve_path(tree, path).index_path


def node_at(root: PromptNode, index_path: IndexPath) -> PromptNode:
    node = root
    for index in index_path:
        node = node.children[index]
    return node


def replace_at(root: PromptNode, index_path: IndexPath, new_node: PromptNode) -> PromptNode:
    """Return a copy of `root` with the node at `index_path` replaced."""
    if not index_path:
        return new_node
    head, *rest = index_path
    children = list(root.children)
    children[head] = replace_at(children[head], tuple(rest), new_node)
    return attrs.evolve(root, children=children)


def remove_at(root: PromptNode, index_path: IndexPath) -> PromptNode:
    if not index_path:
        raise ValueError("The root cannot be removed")
    parent = node_at(root, index_path[:-1])
    children = list(parent.children)
    del children[index_path[-1]]
    return replace_at(root, index_path[:-1], attrs.evolve(parent, children=children))


def insert_at(
    root: PromptNode, parent_path: IndexPath, position: int, nodes: Sequence[PromptNode]
) -> PromptNode:
    parent = node_at(root, parent_path)
    children = list(parent.children)
    children[position:position] = nodes
    return replace_at(root, parent_path, attrs.evolve(parent, children=children))


def induced_subtree(
    tree: PromptTree,
    paths: Iterable[NodePath | ResolvedPath],
    *,
    fuzzy: bool = False,
) -> PromptTree:
    """Extract the subtree made of the referenced nodes, their ancestors and descendants.

    List items keep their original ordinal titles, so '5.' is still '5.' in the result
    even when items '1.' to '4.' are left out.

    :param tree: The full tree
    :param paths: Node paths (resolved or not) to include
    :param fuzzy: Correct mistyped paths
    :return: The induced tree; only the root when no path is given
    :raises PathNotFound: A path does not resolve
    """
    targets: set[IndexPath] = set()
    for path in paths:
        if not isinstance(path, ResolvedPath):
            path = resolve_path(tree, path, fuzzy=fuzzy)
        targets.add(path.index_path)

    root = _prune(tree.root, (), targets)
    return PromptTree(root=root, source_hash=content_digest(root))


def _prune(node: PromptNode, here: IndexPath, targets: set[IndexPath]) -> PromptNode:
    if here in targets:
        return node

    children = []
    for index, child in enumerate(node.children):
        child_path = here + (index,)
        if any(target[: len(child_path)] == child_path for target in targets):
            children.append(_prune(child, child_path, targets))
    return attrs.evolve(node, children=children)


def node_count(tree: PromptTree) -> int:
    return len(enumerate_paths(tree)) + 1
