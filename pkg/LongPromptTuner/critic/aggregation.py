"""Group error reflections for the actor, without asking the LLM."""

from __future__ import annotations

import logging
from collections.abc import Sequence

from critic.models import RESIDUE_GROUP_ID, Reflection, ReflectionGroup
from prompt_tree.nodes import NodePath
from prompt_tree.paths import IndexPath

_logger = logging.getLogger(f"tuner.{__name__}")


def aggregate_node_based(reflections: Sequence[Reflection]) -> list[ReflectionGroup]:
    """One group per referenced node, holding every reflection that references it.

    A reflection with k distinct references joins k groups. Groups follow the order in
    which their node is first referenced. Reflections without any resolved reference end
    up in a trailing residue group.
    """
    members: dict[IndexPath, list[Reflection]] = {}
    node_paths: dict[IndexPath, NodePath] = {}
    residue: list[Reflection] = []

    for reflection in reflections:
        if not reflection.references:
            residue.append(reflection)
            continue
        for reference in reflection.references:
            node_paths.setdefault(reference.index_path, reference.path)
            group = members.setdefault(reference.index_path, [])
            if not group or group[-1] is not reflection:
                group.append(reflection)

    groups = [
        ReflectionGroup(
            group_id=str(node_paths[index_path]),
            members=group,
            merged_references=_merged_references(node_paths[index_path], group),
        )
        for index_path, group in members.items()
    ]
    if residue:
        groups.append(ReflectionGroup(group_id=RESIDUE_GROUP_ID, members=residue))
    return groups


def _merged_references(node_path: NodePath, members: Sequence[Reflection]) -> list[NodePath]:
    """The group's own node first, then every other node its members reference."""
    merged = [node_path]
    for member in members:
        merged += [path for path in member.node_paths if path not in merged]
    return merged


def aggregate_none(reflections: Sequence[Reflection]) -> list[ReflectionGroup]:
    """Every reflection is a group of its own."""
    return [
        ReflectionGroup(
            group_id=f"reflection_{'_'.join(reflection.example_ids) or position}",
            members=(reflection,),
            merged_references=reflection.node_paths,
        )
        for position, reflection in enumerate(reflections, start=1)
    ]


def cap_groups(groups: Sequence[ReflectionGroup], limit: int) -> list[ReflectionGroup]:
    """Keep the `limit` groups with the most members, in their original order.

    Ties are broken in favour of the earlier group.
    """
    if len(groups) <= limit:
        return list(groups)

    ranked = sorted(range(len(groups)), key=lambda index: (-len(groups[index].members), index))
    kept = sorted(ranked[:limit])
    _logger.warning("Keeping %d of %d reflection groups", limit, len(groups))
    return [groups[index] for index in kept]
