import random
from pathlib import Path

import pytest

from prompt_tree.errors import AmbiguousPath, PathNotFound
from prompt_tree.nodes import NodeKind, NodePath, iter_nodes
from prompt_tree.parser import parse_markdown
from prompt_tree.paths import enumerate_paths, induced_subtree, node_count, resolve_path
from prompt_tree.render import render_markdown, to_template_json

prompts_dir = Path(__file__).parent / "prompts"


@pytest.fixture()
def salient():
    return parse_markdown((prompts_dir / "salient_translation.md").read_text(encoding="UTF-8"))


def test_resolve_task_body(salient) -> None:
    resolved = resolve_path(salient, NodePath.from_text("Task> body"))

    assert resolved.node is salient.sections[0].body
    assert resolved.index_path == (0, 0)
    assert not resolved.corrected


def test_resolve_reference_with_json_leftovers(salient) -> None:
    resolved = resolve_path(salient, NodePath.from_text('Task> body",'))

    assert str(resolved.path) == "Task> body"


def test_item_body_addresses_the_item(salient) -> None:
    resolved = resolve_path(salient, NodePath.from_text("Error Identification> 1.> body"))

    assert resolved.node.kind is NodeKind.BULLET
    assert resolved.addresses_body
    assert resolved.index_path == (1, 1)


def test_fuzzy_correction(salient) -> None:
    path = NodePath.from_text("Eror Identification> body")

    with pytest.raises(PathNotFound):
        resolve_path(salient, path)

    resolved = resolve_path(salient, path, fuzzy=True)
    assert resolved.corrected
    assert str(resolved.path) == "Error Identification> body"


def test_fuzzy_respects_threshold(salient) -> None:
    with pytest.raises(PathNotFound):
        resolve_path(salient, NodePath.from_text("Evaluation Criteria> body"), fuzzy=True)


def test_fuzzy_tie_is_ambiguous() -> None:
    tree = parse_markdown("# Task A\nx\n\n# Task B\ny")

    with pytest.raises(AmbiguousPath):
        resolve_path(tree, NodePath.from_text("Task C"), fuzzy=True)


def test_empty_path(salient) -> None:
    with pytest.raises(PathNotFound):
        resolve_path(salient, NodePath(()))


@pytest.mark.parametrize(
    "reference", ["Task> body> more", "Error Identification> 6.> Examples> 1.", "Options> 1."]
)
def test_invalid_paths(salient, reference: str) -> None:
    with pytest.raises(PathNotFound):
        resolve_path(salient, NodePath.from_text(reference), fuzzy=True)


@pytest.mark.parametrize("prompt_file", sorted(prompts_dir.glob("*.md")), ids=lambda p: p.stem)
def test_enumeration_is_complete(prompt_file: Path) -> None:
    tree = parse_markdown(prompt_file.read_text(encoding="UTF-8"))

    resolved = [resolve_path(tree, path).node for path, _ in enumerate_paths(tree)]

    expected = list(iter_nodes(tree.root))[1:]
    assert len(resolved) == len(expected) == node_count(tree) - 1
    assert all(got is want for got, want in zip(resolved, expected))


@pytest.mark.parametrize("prompt_file", sorted(prompts_dir.glob("*.md")), ids=lambda p: p.stem)
def test_fuzzy_keeps_exact_matches(prompt_file: Path) -> None:
    tree = parse_markdown(prompt_file.read_text(encoding="UTF-8"))

    for path, node in enumerate_paths(tree):
        resolved = resolve_path(tree, path, fuzzy=True)
        assert resolved.node is node
        assert not resolved.corrected


def test_induced_subtree_of_single_child() -> None:
    tree = parse_markdown("# Task\nDo X.\n* step")

    assert induced_subtree(tree, [NodePath.from_text("Task")]) == tree


def test_induced_subtree_of_item_body(salient) -> None:
    subtree = induced_subtree(salient, [NodePath.from_text("Error Identification> 1.> body")])

    assert to_template_json(subtree) == {
        "Error Identification": {
            "1.": {"body": "Named entities: Look for changes in names, places, locations, etc."}
        }
    }


def test_induced_subtree_keeps_original_ordinals(salient) -> None:
    subtree = induced_subtree(
        salient,
        [
            NodePath.from_text("Error Identification> 5.> body"),
            NodePath.from_text("Error Identification> 6.> Examples"),
        ],
    )

    assert list(to_template_json(subtree)["Error Identification"]) == ["5.", "6."]


def test_induced_subtree_without_paths(salient) -> None:
    subtree = induced_subtree(salient, [])

    assert subtree.root.children == ()
    assert render_markdown(subtree) == ""


def test_induced_subtree_is_monotone(salient) -> None:
    paths = [path for path, _ in enumerate_paths(salient)]
    rng = random.Random(7)

    for _ in range(200):
        chosen = rng.sample(paths, rng.randint(0, 6))
        extra = rng.choice(paths)

        smaller = {path for path, _ in enumerate_paths(induced_subtree(salient, chosen))}
        larger = {path for path, _ in enumerate_paths(induced_subtree(salient, chosen + [extra]))}
        assert smaller <= larger


def test_body_of_a_section_without_one_addresses_the_section(salient) -> None:
    resolved = resolve_path(salient, NodePath.from_text("Additional points> body"))

    assert resolved.node is salient.sections[3]
    assert resolved.addresses_body
    assert resolved.index_path == (3,)
    assert str(resolved.path) == "Additional points> body"


def test_duplicate_titles_print_with_their_ordinal() -> None:
    tree = parse_markdown("# Notes\nfirst\n\n# Notes\nsecond")

    paths = [str(path) for path, node in enumerate_paths(tree) if node.kind is NodeKind.HEADING]
    assert paths == ["Notes", "Notes#2"]
    assert resolve_path(tree, NodePath.from_text("Notes#2> body")).node.content == "second"
    assert resolve_path(tree, NodePath.from_text("Notes> body")).node.content == "first"
