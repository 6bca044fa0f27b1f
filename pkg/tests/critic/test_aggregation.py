import random

import pytest

from critic.aggregation import aggregate_node_based, aggregate_none, cap_groups
from critic.models import (
    RESIDUE_GROUP_ID,
    Feedback,
    Reference,
    Reflection,
    ReflectionGroup,
    ReflectionKind,
)
from prompt_tree.nodes import NodePath

NODES = [NodePath((f"Heading {index}", "body")) for index in range(8)]


def reference(node: int) -> Reference:
    return Reference(NODES[node], (node, 0))


def reflection(example_id: str, *nodes: int) -> Reflection:
    return Reflection(
        kind=ReflectionKind.ERROR,
        feedback=Feedback(prompt_examination=f"about {example_id}"),
        references=[reference(node) for node in nodes],
        example_ids=(example_id,),
    )


def brute_force_groups(reflections: list[Reflection]) -> dict[str, list[Reflection]]:
    """For every node, the reflections that reference it, from a double loop."""
    groups = {}
    for node_path in NODES:
        members = [r for r in reflections if any(ref.path == node_path for ref in r.references)]
        if members:
            groups[str(node_path)] = members
    return groups


def test_shared_node_collects_both_reflections() -> None:
    first, second = reflection("r1", 0, 1), reflection("r2", 1)

    groups = aggregate_node_based([first, second])

    assert [(group.group_id, list(group.members)) for group in groups] == [
        ("Heading 0> body", [first]),
        ("Heading 1> body", [first, second]),
    ]
    assert groups[1].merged_references == (NODES[1], NODES[0])


def test_no_reflections() -> None:
    assert aggregate_node_based([]) == []


def test_unreferenced_reflections_form_a_residue_group() -> None:
    orphan = reflection("r2")

    groups = aggregate_node_based([reflection("r1", 3), orphan])

    assert groups[-1].group_id == RESIDUE_GROUP_ID
    assert groups[-1].members == (orphan,)
    assert groups[-1].is_residue


def test_node_based_grouping_matches_the_brute_force_oracle() -> None:
    rng = random.Random(10)
    for _ in range(1000):
        reflections = [
            reflection(f"r{index}", *rng.sample(range(len(NODES)), rng.randint(0, 4)))
            for index in range(rng.randint(0, 10))
        ]

        groups = aggregate_node_based(reflections)
        by_node = {g.group_id: list(g.members) for g in groups if not g.is_residue}

        assert by_node == brute_force_groups(reflections)
        first_seen = list(dict.fromkeys(str(ref.path) for r in reflections for ref in r.references))
        assert list(by_node) == first_seen
        assert sum(len(g.members) for g in groups if not g.is_residue) == sum(
            len(r.references) for r in reflections
        )
        grouped = {id(member) for group in groups for member in group.members}
        assert grouped == {id(r) for r in reflections}


def test_aggregate_none() -> None:
    groups = aggregate_none([reflection("r1", 0), reflection("r2", 2, 3)])

    assert [group.group_id for group in groups] == ["reflection_r1", "reflection_r2"]
    assert groups[1].merged_references == (NODES[2], NODES[3])


@pytest.mark.parametrize(
    ("sizes", "limit", "expected"),
    [
        ([1, 3, 2, 3], 2, [1, 3]),
        ([2, 2, 2], 2, [0, 1]),
        ([1, 1], 4, [0, 1]),
    ],
)
def test_cap_groups(sizes, limit, expected) -> None:
    groups = [
        ReflectionGroup(str(index), [reflection(f"r{n}", index) for n in range(size)])
        for index, size in enumerate(sizes)
    ]

    assert [group.group_id for group in cap_groups(groups, limit)] == [str(i) for i in expected]
