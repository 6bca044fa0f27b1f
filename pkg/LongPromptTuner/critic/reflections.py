"""Critic calls: ask for structural, per-error and clustered feedback on a prompt tree."""

from __future__ import annotations

import json
import logging
from collections.abc import Iterable, Sequence
from typing import Any

from pydantic import TypeAdapter

from critic.errors import EmptyBatch
from critic.models import (
    ErrorAssessment,
    ErrorReplyItem,
    Feedback,
    Reference,
    Reflection,
    ReflectionGroup,
    ReflectionKind,
    StructuralReply,
)
from evaluation.models import Misclassified
from llm.gateway import Gateway
from llm.models import Tag
from llm.templates import fill_template
from prompt_tree.errors import PromptTreeError
from prompt_tree.nodes import NodePath, PromptTree
from prompt_tree.paths import resolve_path
from prompt_tree.render import render_markdown, to_template_json

_logger = logging.getLogger(f"tuner.{__name__}")

_ERROR_ITEMS = TypeAdapter(list[ErrorReplyItem])


def resolve_references(
    tree: PromptTree, raw_references: Iterable[str]
) -> tuple[list[Reference], list[str]]:
    """Fuzzy-resolve the critic's references, keeping each node once.

    :return: The resolved references in order of appearance and the raw texts that did not
      resolve
    """
    resolved: list[Reference] = []
    unresolved: list[str] = []
    seen = set()
    for raw in raw_references:
        path = NodePath.from_text(raw)
        try:
            match = resolve_path(tree, path, fuzzy=True)
        except PromptTreeError as e:
            _logger.warning("Dropping prompt reference %r: %s", raw, e)
            unresolved.append(raw)
            continue
        if match.index_path in seen:
            continue
        seen.add(match.index_path)
        resolved.append(Reference(match.path, match.index_path, match.corrected))
    return resolved, unresolved


def _prompt_json(tree: PromptTree) -> str:
    return json.dumps(to_template_json(tree), ensure_ascii=False)


def _batch_json(tree: PromptTree, batch: Sequence[Misclassified]) -> str:
    return json.dumps(
        {"prompt": render_markdown(tree), "input_data": [item.to_input_data() for item in batch]},
        ensure_ascii=False,
    )


def _error_items(value: Any) -> list[ErrorReplyItem]:
    if isinstance(value, dict):
        # tolerate a wrapping object around the list
        value = next((entry for entry in value.values() if isinstance(entry, list)), [value])
    return _ERROR_ITEMS.validate_python(value)


def _feedback(item: ErrorReplyItem) -> Feedback:
    return Feedback(
        prompt_examination=item.prompt_feedback.prompt_examination,
        improvement_suggestions=item.prompt_feedback.improvement_suggestions,
        prediction_analysis=item.prompt_feedback.prediction_analysis,
    )


async def structural_reflection(tree: PromptTree, gateway: Gateway) -> Reflection:
    """Assess the overall structure, clarity and completeness of a prompt.

    :raises NoParseableBlock: The critic gave no usable reply, even when asked again
    """
    user_text = fill_template("critic_structural", prompt_json=_prompt_json(tree))
    reply = await gateway.ask_json(
        Tag.CRITIC_STRUCTURAL, user_text, StructuralReply.model_validate
    )

    references, unresolved = resolve_references(tree, reply.prompt_references)
    examinations = [entry.prompt_examination for entry in reply.prompt_feedback]
    suggestions = [text for entry in reply.prompt_feedback for text in entry.improvement_suggestion]
    feedback = Feedback(
        prompt_examination="\n".join(text for text in examinations if text),
        improvement_suggestions=suggestions,
    )
    return Reflection(
        kind=ReflectionKind.STRUCTURAL,
        feedback=feedback,
        references=references,
        unresolved_references=unresolved,
    )


async def error_reflections(
    tree: PromptTree, batch: Sequence[Misclassified], gateway: Gateway
) -> ErrorAssessment:
    """One reflection per misclassified example, all asked for in a single request.

    Examples the reply leaves out are returned as uncovered ids.

    :raises EmptyBatch: The batch is empty
    :raises NoParseableBlock: The critic gave no usable reply, even when asked again
    """
    if not batch:
        raise EmptyBatch("Error reflection needs at least one misclassified example")

    user_text = fill_template(
        "critic_error", prompt_json=_prompt_json(tree), batch_json=_batch_json(tree, batch)
    )
    items = await gateway.ask_json(Tag.CRITIC_ERROR, user_text, _error_items)

    batch_ids = [item.id for item in batch]
    reflections = []
    covered: set[str] = set()
    for item in items:
        if item.id not in batch_ids:
            _logger.warning("Critic reflected on unknown example id %r, ignoring it", item.id)
            continue
        if item.id in covered:
            continue
        covered.add(item.id)

        references, unresolved = resolve_references(tree, item.prompt_references)
        reflections.append(
            Reflection(
                kind=ReflectionKind.ERROR,
                feedback=_feedback(item),
                references=references,
                unresolved_references=unresolved,
                example_ids=(item.id,),
                prediction_explanation=_explanation(item),
            )
        )

    uncovered = [example_id for example_id in batch_ids if example_id not in covered]
    if uncovered:
        _logger.warning("Critic left %d of %d examples uncovered", len(uncovered), len(batch))
    return ErrorAssessment(reflections=reflections, uncovered_ids=uncovered)


def _explanation(item: ErrorReplyItem) -> str | tuple[str, ...]:
    explanation = item.prediction_explanation
    return tuple(explanation) if isinstance(explanation, list) else explanation


async def aggregate_pattern_based(
    tree: PromptTree,
    batch: Sequence[Misclassified],
    cluster_count: int,
    gateway: Gateway,
) -> list[ReflectionGroup]:
    """Let the critic cluster the errors by shared pattern, in one request.

    :param cluster_count: The maximum number of clusters; extra clusters are dropped
    :raises EmptyBatch: The batch is empty
    :raises NoParseableBlock: The critic gave no usable reply, even when asked again
    """
    if cluster_count < 1:
        raise ValueError(f"cluster_count must be at least 1, got {cluster_count}")
    if not batch:
        raise EmptyBatch("Pattern aggregation needs at least one misclassified example")

    user_text = fill_template(
        "critic_cluster",
        number_of_clusters=str(cluster_count),
        prompt_json=_prompt_json(tree),
        batch_json=_batch_json(tree, batch),
    )
    items = await gateway.ask_json(Tag.CRITIC_CLUSTER, user_text, _error_items)
    if len(items) > cluster_count:
        _logger.warning("Critic returned %d clusters, keeping %d", len(items), cluster_count)
        items = items[:cluster_count]

    groups = []
    for position, item in enumerate(items, start=1):
        references, unresolved = resolve_references(tree, item.prompt_references)
        cluster = Reflection(
            kind=ReflectionKind.CLUSTER,
            feedback=_feedback(item),
            references=references,
            unresolved_references=unresolved,
            prediction_explanation=_explanation(item),
        )
        group_id = item.id if item.id.startswith("cluster_") else f"cluster_{position}"
        groups.append(
            ReflectionGroup(
                group_id=group_id,
                members=(cluster,),
                merged_references=cluster.node_paths,
            )
        )
    return groups
