"""The update operator: validate edit actions and apply them to prompt trees.

Trees are immutable, every function returns a new tree and leaves its input untouched.
"""

from __future__ import annotations

import enum
import logging
import re
from collections.abc import Iterable, Sequence
from typing import Any

import attrs

from actions.errors import ActionError, CapacityExceeded, InvalidAction, MergeTargetMissing
from actions.models import (
    MAX_EXAMPLES,
    ActionOutcome,
    ApplyReport,
    DeleteSection,
    EditAction,
    ExampleUpdate,
    MergeSection,
    NewSectionCreation,
    SectionReorder,
    SectionRephrase,
    UpdateType,
    Violation,
    ViolationCode,
)
from prompt_tree.errors import PathNotFound, PromptTreeError
from prompt_tree.nodes import (
    BODY_LABEL,
    EXAMPLES_LABEL,
    NodeKind,
    NodePath,
    PromptNode,
    PromptTree,
    display_label,
)
from prompt_tree.paths import (
    IndexPath,
    ResolvedPath,
    insert_at,
    node_at,
    remove_at,
    replace_at,
    resolve_path,
)
from prompt_tree.render import as_example_list, nodes_from_mapping

_logger = logging.getLogger(f"tuner.{__name__}")

_TOKEN = re.compile(r"\w+")
_ITEM_KEY = re.compile(r"^\d+\.$")
_LEAF_KEYS = (BODY_LABEL, EXAMPLES_LABEL)


class Policy(enum.Enum):
    SKIP_INVALID = "skip-invalid"
    FAIL_FAST = "fail-fast"


class ApplyAborted(ActionError):
    """Raised under FAIL_FAST; carries the tree and report up to the failing action."""

    def __init__(self, message: str, *, tree: PromptTree, report: ApplyReport) -> None:
        super().__init__(message)
        self.tree = tree
        self.report = report


@attrs.define(frozen=True)
class ExampleHost:
    index_path: IndexPath
    node: PromptNode

    @property
    def examples(self) -> tuple[str, ...]:
        block = self.node.examples_block
        return block.examples if block is not None else ()

    @property
    def remaining_capacity(self) -> int:
        return max(0, MAX_EXAMPLES - len(self.examples))


def _resolve(tree: PromptTree, path: NodePath, fuzzy: bool) -> ResolvedPath:
    return resolve_path(tree, path, fuzzy=fuzzy)


def example_host(tree: PromptTree, path: NodePath, *, fuzzy: bool = False) -> ExampleHost:
    """Find the heading or list item whose examples an ExampleUpdate addresses.

    A reference to a missing 'Examples' block falls back to its parent, which then gets a
    new block.

    :raises PathNotFound: The reference does not resolve
    :raises InvalidAction: The reference addresses the root
    """
    try:
        resolved = _resolve(tree, path, fuzzy)
    except PathNotFound:
        if not path or path.segments[-1] != EXAMPLES_LABEL or len(path) < 2:
            raise
        resolved = _resolve(tree, path.parent, fuzzy)

    index_path, node = resolved.index_path, resolved.node
    if node.kind in (NodeKind.BODY, NodeKind.EXAMPLES):
        index_path = index_path[:-1]
        node = node_at(tree.root, index_path)
    if node.kind is NodeKind.ROOT:
        raise InvalidAction(f"'{path}' does not address a section that can hold examples")
    return ExampleHost(index_path=index_path, node=node)


def validate_action(
    tree: PromptTree, action: EditAction, *, fuzzy: bool = False
) -> Violation | None:
    """Check an action against the tree without applying it.

    :return: None when the action can be applied, otherwise the violation
    """
    try:
        match action:
            case SectionReorder():
                return _validate_reorder(tree, action, fuzzy)
            case ExampleUpdate():
                return _validate_example_update(tree, action, fuzzy)
            case NewSectionCreation():
                _resolve(tree, action.section_position, fuzzy)
                return _validate_structure(action.new_section_structure)
            case MergeSection():
                return _validate_merge(tree, action, fuzzy)
            case SectionRephrase():
                return _validate_rephrase(tree, action, fuzzy)
            case DeleteSection():
                resolved = _resolve(tree, action.section_reference, fuzzy)
                if resolved.addresses_body and resolved.node.kind is NodeKind.HEADING:
                    return Violation(ViolationCode.NO_BODY, str(resolved.path))
                return None
    except PromptTreeError as e:
        return Violation(ViolationCode.UNRESOLVED_PATH, str(e))
    except InvalidAction as e:
        return Violation(ViolationCode.ROOT_TARGET, str(e))
    raise TypeError(f"Not an edit action: {action!r}")


def _validate_reorder(tree: PromptTree, action: SectionReorder, fuzzy: bool) -> Violation | None:
    source = _resolve(tree, action.section_reference, fuzzy)
    target = _resolve(tree, action.new_position, fuzzy)

    for resolved in (source, target):
        if resolved.node.kind in (NodeKind.BODY, NodeKind.EXAMPLES) or resolved.addresses_body:
            return Violation(ViolationCode.BARE_LEAF_REORDER, str(resolved.path))

    if source.index_path[:-1] != target.index_path[:-1]:
        return Violation(
            ViolationCode.CROSS_PARENT_REORDER, f"'{source.path}' and '{target.path}'"
        )
    if source.node.kind.is_list_item != target.node.kind.is_list_item:
        return Violation(ViolationCode.MIXED_KIND_REORDER, f"'{source.path}' and '{target.path}'")
    return None


def _validate_rephrase(
    tree: PromptTree, action: SectionRephrase, fuzzy: bool
) -> Violation | None:
    resolved = _resolve(tree, action.section_reference, fuzzy)
    key = action.updated_key.strip()
    if (
        resolved.node.kind is NodeKind.HEADING
        and not resolved.addresses_body
        and _ITEM_KEY.match(key)
        and _keyed_child(resolved.node, key) is None
    ):
        return Violation(ViolationCode.UNKNOWN_ITEM_KEY, f"{key!r} under '{resolved.path}'")
    return None


def _keyed_child(node: PromptNode, key: str) -> int | None:
    """Index of the list item or subheading an updated key names, if any."""
    for index, (label, child) in enumerate(node.labelled_children()):
        if child.kind in (NodeKind.BODY, NodeKind.EXAMPLES):
            continue
        if key in (label, display_label(label)):
            return index
    return None


def _validate_example_update(
    tree: PromptTree, action: ExampleUpdate, fuzzy: bool
) -> Violation | None:
    host = example_host(tree, action.section_reference, fuzzy=fuzzy)
    if action.update_type is UpdateType.ADDITION and action.resolved_examples is not None:
        new_entries = [entry for entry in action.resolved_examples if entry not in host.examples]
        if len(host.examples) + len(new_entries) > MAX_EXAMPLES:
            return Violation(
                ViolationCode.CAPACITY,
                f"{len(host.examples)} + {len(new_entries)} examples > {MAX_EXAMPLES}",
            )
    return None


def _validate_structure(structure: dict[str, Any]) -> Violation | None:
    sections = {key: value for key, value in structure.items() if key not in _LEAF_KEYS}
    if not sections:
        return Violation(ViolationCode.MISSING_BODY, "the structure has no titled section")
    for title, value in sections.items():
        if isinstance(value, dict) and not value.get(BODY_LABEL):
            return Violation(ViolationCode.MISSING_BODY, repr(title))
    return None


def _validate_merge(tree: PromptTree, action: MergeSection, fuzzy: bool) -> Violation | None:
    first_path, second_path = action.section_reference_merged
    first = _resolve(tree, first_path, fuzzy)
    try:
        second = _resolve(tree, second_path, fuzzy)
    except PathNotFound:
        second = None

    if second is not None:
        first_index, second_index = first.index_path, second.index_path
        shorter, longer = sorted((first_index, second_index), key=len)
        if longer[: len(shorter)] == shorter:
            return Violation(ViolationCode.NESTED_MERGE, f"'{first.path}' and '{second.path}'")
    return _validate_structure(action.new_section_structure)


def apply_action(tree: PromptTree, action: EditAction, *, fuzzy: bool = False) -> PromptTree:
    """Apply one action and return the new tree.

    :raises PathNotFound: A reference does not resolve
    :raises CapacityExceeded: An example addition would exceed the block capacity
    :raises MergeTargetMissing: The first merge source does not exist
    :raises InvalidAction: The action violates the tree structure
    """
    if violation := validate_action(tree, action, fuzzy=fuzzy):
        if violation.code is ViolationCode.CAPACITY:
            raise CapacityExceeded(str(violation))
        if violation.code is ViolationCode.UNRESOLVED_PATH:
            if isinstance(action, MergeSection):
                _raise_missing_merge_source(tree, action, fuzzy)
            raise PathNotFound(violation.detail)
        raise InvalidAction(str(violation))

    match action:
        case SectionReorder():
            root = _reorder(tree, action, fuzzy)
        case SectionRephrase():
            root = _rephrase(tree, action, fuzzy)
        case ExampleUpdate():
            root = _update_examples(tree, action, fuzzy)
        case DeleteSection():
            root = _delete(tree, action, fuzzy)
        case NewSectionCreation():
            root = _create(tree, action.section_position, action.new_section_structure, fuzzy)
        case MergeSection():
            root = _merge(tree, action, fuzzy)

    return PromptTree.from_root(root)


def _raise_missing_merge_source(tree: PromptTree, action: MergeSection, fuzzy: bool) -> None:
    try:
        _resolve(tree, action.section_reference_merged[0], fuzzy)
    except PathNotFound as e:
        raise MergeTargetMissing(str(e)) from e


def _reorder(tree: PromptTree, action: SectionReorder, fuzzy: bool) -> PromptNode:
    source = _resolve(tree, action.section_reference, fuzzy).index_path
    target = _resolve(tree, action.new_position, fuzzy).index_path

    moved = node_at(tree.root, source)
    root = remove_at(tree.root, source)
    return insert_at(root, source[:-1], target[-1], [moved])


def _rephrase(tree: PromptTree, action: SectionRephrase, fuzzy: bool) -> PromptNode:
    resolved = _resolve(tree, action.section_reference, fuzzy)
    node, value, index_path = resolved.node, action.updated_value, resolved.index_path
    key = BODY_LABEL if resolved.addresses_body else action.updated_key.strip()

    # a key naming a list item or subheading rephrases that child, not the section title
    if node.kind is NodeKind.HEADING and (child := _keyed_child(node, key)) is not None:
        node, index_path, key = node.children[child], index_path + (child,), BODY_LABEL

    match node.kind:
        case NodeKind.BODY:
            updated = attrs.evolve(node, content=_text(value))
        case NodeKind.EXAMPLES:
            updated = attrs.evolve(node, examples=as_example_list(value))
        case NodeKind.BULLET | NodeKind.NUMBERED:
            updated = _rephrase_item(node, key, value)
        case NodeKind.HEADING:
            updated = _rephrase_heading(node, key, value)
        case _:
            raise InvalidAction("The prompt root cannot be rephrased")

    return replace_at(tree.root, index_path, updated)


def _rephrase_item(node: PromptNode, key: str, value: Any) -> PromptNode:
    if key == EXAMPLES_LABEL:
        return _with_examples(node, as_example_list(value))
    if isinstance(value, dict):
        value = value.get(BODY_LABEL, "")
    return attrs.evolve(node, content=_text(value))


def _rephrase_heading(node: PromptNode, key: str, value: Any) -> PromptNode:
    key = key.strip()
    if key == EXAMPLES_LABEL:
        return _with_examples(node, as_example_list(value))
    if key and key != BODY_LABEL:
        node = attrs.evolve(node, title=key)

    if isinstance(value, dict):
        return attrs.evolve(node, children=nodes_from_mapping(value, node.level))
    if not _text(value):
        return node
    return _with_body(node, _text(value))


def _with_body(node: PromptNode, content: str) -> PromptNode:
    children = list(node.children)
    body = PromptNode(kind=NodeKind.BODY, content=content)
    for index, child in enumerate(children):
        if child.kind is NodeKind.BODY:
            children[index] = body
            break
    else:
        children.insert(0, body)
    return attrs.evolve(node, children=children)


def _with_examples(node: PromptNode, examples: Sequence[str]) -> PromptNode:
    """Replace (or create, or drop when empty) the examples block of a section or item."""
    children = [child for child in node.children if child.kind is not NodeKind.EXAMPLES]
    if examples:
        position = next(
            (
                index
                for index, child in enumerate(node.children)
                if child.kind is NodeKind.EXAMPLES
            ),
            1 if children and children[0].kind is NodeKind.BODY else 0,
        )
        children.insert(position, PromptNode(kind=NodeKind.EXAMPLES, examples=examples))
    return attrs.evolve(node, children=children)


def _update_examples(tree: PromptTree, action: ExampleUpdate, fuzzy: bool) -> PromptNode:
    if action.resolved_examples is None:
        raise InvalidAction(f"Examples for '{action.section_reference}' were never resolved")

    host = example_host(tree, action.section_reference, fuzzy=fuzzy)
    existing = list(host.examples)

    match action.update_type:
        case UpdateType.ADDITION:
            examples = existing + [e for e in action.resolved_examples if e not in existing]
        case UpdateType.DELETION:
            examples = existing
            for entry in action.resolved_examples:
                if (index := best_match(entry, examples)) is not None:
                    examples = examples[:index] + examples[index + 1 :]
                else:
                    _logger.warning("No example matches %r, nothing deleted", entry)
        case UpdateType.REWRITING:
            examples = list(existing)
            rewritten: set[int] = set()
            for entry in action.resolved_examples:
                index = best_match(entry, examples, exclude=rewritten)
                if index is None:
                    _logger.warning("No example matches rewrite %r, skipped", entry)
                    continue
                examples[index] = entry
                rewritten.add(index)

    return replace_at(tree.root, host.index_path, _with_examples(host.node, examples))


def _tokens(text: str) -> set[str]:
    return set(_TOKEN.findall(text.lower()))


def best_match(entry: str, examples: Sequence[str], *, exclude: Iterable[int] = ()) -> int | None:
    """Index of the example equal to `entry`, else the one with the highest token overlap.

    Ties go to the earliest example; no overlap at all means no match.
    """
    excluded = set(exclude)
    for index, example in enumerate(examples):
        if index not in excluded and example.strip() == entry.strip():
            return index

    entry_tokens = _tokens(entry)
    best_index, best_score = None, 0.0
    for index, example in enumerate(examples):
        if index in excluded:
            continue
        example_tokens = _tokens(example)
        union = entry_tokens | example_tokens
        score = len(entry_tokens & example_tokens) / len(union) if union else 0.0
        if score > best_score:
            best_index, best_score = index, score
    return best_index


def _delete(tree: PromptTree, action: DeleteSection, fuzzy: bool) -> PromptNode:
    resolved = _resolve(tree, action.section_reference, fuzzy)
    if not resolved.index_path:
        raise InvalidAction("The prompt root cannot be deleted")
    return remove_at(tree.root, resolved.index_path)


def _insertion_point(tree: PromptTree, anchor: ResolvedPath) -> IndexPath:
    """Slot right after the anchor; a body or examples anchor stands for its section."""
    index_path = anchor.index_path
    if anchor.node.kind in (NodeKind.BODY, NodeKind.EXAMPLES):
        index_path = index_path[:-1]
    if not index_path:
        return (len(tree.root.children),)
    return index_path[:-1] + (index_path[-1] + 1,)


def _create(
    tree: PromptTree, position: NodePath, structure: dict[str, Any], fuzzy: bool
) -> PromptNode:
    slot = _insertion_point(tree, _resolve(tree, position, fuzzy))
    return _insert_structure(tree.root, slot, structure)


def _insert_structure(root: PromptNode, slot: IndexPath, structure: dict[str, Any]) -> PromptNode:
    parent_path = slot[:-1]
    parent = node_at(root, parent_path)

    sibling_items = [child for child in parent.children if child.kind.is_list_item]
    list_style = sibling_items[0].kind if sibling_items else NodeKind.BULLET

    sections = {key: value for key, value in structure.items() if key not in _LEAF_KEYS}
    if len(sections) != len(structure):
        _logger.warning("Ignoring untitled body/Examples keys of a new section structure")

    new_nodes = nodes_from_mapping(sections, parent.level, list_style)
    root = insert_at(root, parent_path, slot[-1], new_nodes)
    return replace_at(root, parent_path, _canonical_order(node_at(root, parent_path)))


def _canonical_order(node: PromptNode) -> PromptNode:
    """Stable-sort children so content comes first, then list items, then headings."""

    def rank(child: PromptNode) -> int:
        if child.kind is NodeKind.HEADING:
            return 2
        return 1 if child.kind.is_list_item else 0

    return attrs.evolve(node, children=sorted(node.children, key=rank))


def _merge(tree: PromptTree, action: MergeSection, fuzzy: bool) -> PromptNode:
    first_path, second_path = action.section_reference_merged
    try:
        first = _resolve(tree, first_path, fuzzy)
    except PathNotFound as e:
        raise MergeTargetMissing(f"First merge source '{first_path}' not found") from e

    try:
        second = _resolve(tree, second_path, fuzzy)
    except PathNotFound:
        _logger.warning(
            "Second merge source '%s' not found, creating the merged section only", second_path
        )
        return _create(tree, action.section_position, action.new_section_structure, fuzzy)

    sources = [first.index_path, second.index_path]
    try:
        anchor = _resolve(tree, action.section_position, fuzzy)
    except PathNotFound:
        _logger.warning("Merge position '%s' not found, using the first source's place", first_path)
        anchor = first

    # merging into the place of a source replaces it, any other anchor inserts after it
    slot = anchor.index_path if anchor.index_path in sources else _insertion_point(tree, anchor)

    root = tree.root
    for removed in sorted(sources, reverse=True):
        root = remove_at(root, removed)
        slot = _shift_after_removal(slot, removed)

    return _insert_structure(root, slot, action.new_section_structure)


def _shift_after_removal(slot: IndexPath, removed: IndexPath) -> IndexPath:
    depth = len(removed) - 1
    if len(removed) <= len(slot) and slot[: len(removed)] == removed:
        return slot if len(removed) == len(slot) else removed
    if len(removed) <= len(slot) and slot[:depth] == removed[:depth] and removed[-1] < slot[depth]:
        return slot[:depth] + (slot[depth] - 1,) + slot[depth + 1 :]
    return slot


def apply_actions(
    tree: PromptTree,
    actions: Sequence[EditAction],
    *,
    policy: Policy = Policy.SKIP_INVALID,
    fuzzy: bool = False,
) -> tuple[PromptTree, ApplyReport]:
    """Apply actions in order, each against the tree produced by the previous one.

    :param tree: The starting tree
    :param actions: The actions in emission order
    :param policy: Skip invalid actions (recording why) or abort on the first one
    :param fuzzy: Correct mistyped references
    :return: The final tree and a report of every action's outcome
    :raises ApplyAborted: Under FAIL_FAST, with the partial tree and report attached
    """
    report = ApplyReport()
    for action in actions:
        try:
            updated = apply_action(tree, action, fuzzy=fuzzy)
        except (ActionError, PromptTreeError) as e:
            report.record(ActionOutcome(action=action, applied=False, reason=str(e)))
            if policy is Policy.FAIL_FAST:
                raise ApplyAborted(str(e), tree=tree, report=report) from e
            _logger.warning("Skipping %s on '%s': %s", action.kind, action.references[0], e)
            continue

        tree = updated
        report.record(ActionOutcome(action=action, applied=True))

    return tree, report


def _text(value: Any) -> str:
    if isinstance(value, list):
        return "\n".join(str(entry) for entry in value).strip()
    return "" if value is None else str(value).strip()
