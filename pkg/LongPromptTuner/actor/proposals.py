"""Asking the actor for edit actions and applying them to a candidate."""

from __future__ import annotations

import json
import logging
from collections.abc import Sequence
from typing import Any, Final

import attrs

from actions.engine import Policy, apply_actions, validate_action
from actions.errors import ActionError, InvalidAction
from actions.examples import materialize_examples
from actions.models import ActionOutcome, EditAction, ExampleUpdate
from actions.wire import actions_from_reply
from actor.models import Expansion, Proposal, StructuralUpdate
from critic.models import Reflection, ReflectionGroup
from llm.errors import NoParseableBlock
from llm.gateway import Gateway
from llm.models import Tag
from llm.templates import fill_template
from prompt_tree.errors import PromptTreeError
from prompt_tree.nodes import NodePath, PromptTree
from prompt_tree.paths import ResolvedPath, induced_subtree, resolve_path
from prompt_tree.render import to_template_json

_logger = logging.getLogger(f"tuner.{__name__}")

MAX_ACTIONS: Final = 12


def _parse_actions(value: Any) -> tuple[list[EditAction], list[str]]:
    try:
        return actions_from_reply(value)
    except InvalidAction as e:
        raise NoParseableBlock(str(e)) from e


def _referenced_paths(reflection: Reflection | ReflectionGroup) -> Sequence[NodePath]:
    if isinstance(reflection, ReflectionGroup):
        return reflection.merged_references
    return reflection.node_paths


def _feedback_json(reflection: Reflection | ReflectionGroup) -> list[dict[str, Any]]:
    if isinstance(reflection, ReflectionGroup):
        return reflection.to_feedback_json()
    return [reflection.to_feedback_json()]


def prompt_view(tree: PromptTree, paths: Sequence[NodePath]) -> PromptTree:
    """The part of the tree the actor is shown: the subtree induced by the paths that still
    resolve, or the whole tree when none do."""
    resolved: list[ResolvedPath] = []
    for path in paths:
        try:
            resolved.append(resolve_path(tree, path, fuzzy=True))
        except PromptTreeError as e:
            _logger.debug("Leaving '%s' out of the actor's view: %s", path, e)
    if not resolved:
        return tree
    return induced_subtree(tree, resolved)


def canonical_references(tree: PromptTree, action: EditAction) -> EditAction:
    """Replace every reference that fuzzy-resolves by the path it resolves to.

    References that do not resolve are kept as they are; the engine decides about them.
    """
    changes: dict[str, Any] = {}
    for field in attrs.fields(type(action)):
        value = getattr(action, field.name)
        if isinstance(value, NodePath):
            changes[field.name] = _canonical(tree, value)
        elif isinstance(value, tuple) and value and isinstance(value[0], NodePath):
            changes[field.name] = tuple(_canonical(tree, path) for path in value)
    return attrs.evolve(action, **changes)


def _canonical(tree: PromptTree, path: NodePath) -> NodePath:
    try:
        return resolve_path(tree, path, fuzzy=True).path
    except PromptTreeError:
        return path


async def propose_actions(
    tree: PromptTree,
    reflection: Reflection | ReflectionGroup,
    gateway: Gateway,
    *,
    max_actions: int = MAX_ACTIONS,
) -> Proposal:
    """Ask the actor how to address a reflection and keep the actions that fit the tree.

    The actor sees only the nodes the reflection references (with their ancestors and
    descendants), but actions are validated against the full tree since paths are global.
    Example updates come back with their examples materialized.

    :param tree: The full tree the actions will be applied to
    :param reflection: A structural reflection or a group of error reflections
    :param gateway: Where the actor and example replies come from
    :param max_actions: Actions beyond this many are dropped
    :return: The proposal; an empty action list is a valid outcome
    :raises NoParseableBlock: The actor gave no usable reply, even when asked again
    """
    view = prompt_view(tree, _referenced_paths(reflection))
    user_text = fill_template(
        "actor",
        prompt_json=json.dumps(to_template_json(view), ensure_ascii=False),
        feedback_json=json.dumps(_feedback_json(reflection), ensure_ascii=False),
    )
    actions, rejected = await gateway.ask_json(Tag.ACTOR, user_text, _parse_actions)

    if len(actions) > max_actions:
        _logger.warning("Actor proposed %d actions, keeping %d", len(actions), max_actions)
        rejected += [
            f"action {index}: beyond the first {max_actions}"
            for index in range(max_actions, len(actions))
        ]
        actions = actions[:max_actions]

    kept: list[EditAction] = []
    dropped: list[ActionOutcome] = []
    for action in actions:
        action = canonical_references(tree, action)
        if violation := validate_action(tree, action, fuzzy=True):
            _logger.warning("Dropping %s on '%s': %s", action.kind, action.references[0], violation)
            dropped.append(ActionOutcome(action=action, applied=False, reason=str(violation)))
            continue

        if isinstance(action, ExampleUpdate):
            try:
                action = await materialize_examples(action, tree, gateway, fuzzy=True)
            except (ActionError, PromptTreeError) as e:
                _logger.warning("Dropping example update on '%s': %s", action.references[0], e)
                dropped.append(ActionOutcome(action=action, applied=False, reason=str(e)))
                continue
        kept.append(action)

    if not kept:
        _logger.info("The actor proposed no applicable actions")
    return Proposal(actions=kept, dropped=dropped, rejected=rejected)


async def apply_structural(
    tree: PromptTree, structural: Reflection, gateway: Gateway
) -> StructuralUpdate:
    """Propose and apply the actions for a structural reflection, skipping invalid ones."""
    proposal = await propose_actions(tree, structural, gateway)
    updated, report = apply_actions(
        tree, proposal.actions, policy=Policy.SKIP_INVALID, fuzzy=True
    )
    return StructuralUpdate(tree=updated, proposal=proposal, report=report)


async def expand_group(
    structural: StructuralUpdate, group: ReflectionGroup, gateway: Gateway
) -> Expansion:
    """Apply one group's actions on top of an already structurally updated tree."""
    proposal = await propose_actions(structural.tree, group, gateway)
    updated, report = apply_actions(
        structural.tree, proposal.actions, policy=Policy.SKIP_INVALID, fuzzy=True
    )
    return Expansion(
        tree=updated,
        group_id=group.group_id,
        structural=structural,
        proposal=proposal,
        report=report,
    )


async def expand_candidate(
    tree: PromptTree, structural: Reflection, group: ReflectionGroup, gateway: Gateway
) -> Expansion:
    """Structural actions first, then the group's actions on the structurally updated tree.

    Searching shares one `apply_structural` result across all groups of a candidate and
    calls `expand_group` directly; this is the single-group composition.
    """
    return await expand_group(await apply_structural(tree, structural, gateway), group, gateway)
