from pathlib import Path

import pytest

from prompt_tree.errors import EmptyInput, MalformedStructure
from prompt_tree.nodes import NodeKind
from prompt_tree.parser import parse_markdown, split_examples
from prompt_tree.render import render_markdown

prompts_dir = Path(__file__).parent / "prompts"
corpus = sorted(prompts_dir.glob("*.md"))


def squash(text: str) -> str:
    return "".join(text.split())


def test_single_section() -> None:
    tree = parse_markdown("# Task\nDo X.")

    (task,) = tree.root.children
    assert task.kind is NodeKind.HEADING
    assert task.level == 1
    assert task.title == "Task"
    assert task.body is not None
    assert task.body.content == "Do X."


def test_salient_translation_sections() -> None:
    tree = parse_markdown((prompts_dir / "salient_translation.md").read_text(encoding="UTF-8"))

    assert [section.title for section in tree.sections] == [
        "Task",
        "Error Identification",
        "Performance Analysis",
        "Additional points",
        "Options",
        "Output format",
    ]


def test_list_items_and_trailing_examples() -> None:
    tree = parse_markdown((prompts_dir / "salient_translation.md").read_text(encoding="UTF-8"))

    error_identification = tree.sections[1]
    items = [child for child in error_identification.children if child.kind.is_list_item]
    assert [item.title for item in items] == ["1.", "2.", "3.", "4.", "5.", "6."]
    assert items[0].content == "Named entities: Look for changes in names, places, locations, etc."

    # the examples line after the blank line still belongs to the last item
    assert items[5].examples_block is not None
    assert items[5].examples_block.examples == (
        "A city name changed from 'Berlin' to 'Munich' would be a 'Named entities' error",
        "A date changed from '1990' to '1989' would be a 'Numerical values' error",
    )
    assert error_identification.examples_block is None


def test_options_are_body_lines() -> None:
    tree = parse_markdown((prompts_dir / "salient_translation.md").read_text(encoding="UTF-8"))

    options = tree.sections[4]
    assert [child.kind for child in options.children] == [NodeKind.BODY]
    assert options.body.content.splitlines()[0] == "(A) Modifiers or Adjectives"


def test_examples_attached_to_heading() -> None:
    tree = parse_markdown("# Domains\nAssess arguments.\nExamples: {Ancestry},{Football}")

    (domains,) = tree.sections
    assert domains.examples_block.examples == ("Ancestry", "Football")


def test_numbered_items_keep_their_titles() -> None:
    tree = parse_markdown("# Steps\n1. Read the input\n3. Decide\nwith care")

    items = tree.sections[0].children
    assert [(item.kind, item.title) for item in items] == [
        (NodeKind.NUMBERED, "1."),
        (NodeKind.NUMBERED, "3."),
    ]
    assert items[1].content == "Decide\nwith care"


def test_fenced_lines_are_opaque() -> None:
    text = "# Input Format\nThe input:\n```\n# not a heading\n* not a bullet\n```"

    tree = parse_markdown(text)

    (section,) = tree.sections
    assert [child.kind for child in section.children] == [NodeKind.BODY]
    assert "# not a heading" in section.body.content


def test_nested_headings() -> None:
    tree = parse_markdown("# Emotion Labels\n\n## Admiration\nText A\n\n## Anger\nText B\n# Output")

    labels, output = tree.sections
    assert [child.title for child in labels.children] == ["Admiration", "Anger"]
    assert all(child.level == 2 for child in labels.children)
    assert output.children == ()


def test_heading_jump_is_clamped() -> None:
    with pytest.warns(MalformedStructure):
        tree = parse_markdown("# Task\nDo X.\n### Detail\nMore.")

    (task,) = tree.sections
    detail = task.children[-1]
    assert detail.title == "Detail"
    assert detail.level == 2
    assert len(tree.warnings) == 1


@pytest.mark.parametrize("text", ["", "  \n\n "])
def test_empty_input(text: str) -> None:
    with pytest.raises(EmptyInput):
        parse_markdown(text)


def test_duplicate_titles_are_disambiguated() -> None:
    tree = parse_markdown("# Notes\nfirst\n\n# Notes\nsecond")

    labels = tree.root.child_labels()
    assert len(set(labels)) == 2
    assert [label.replace("\u2063", "") for label in labels] == ["Notes", "Notes"]
    assert render_markdown(tree) == "# Notes\nfirst\n\n# Notes\nsecond"


@pytest.mark.parametrize(
    ("text", "expected"),
    [
        ("{a},{b}", ["a", "b"]),
        ("{a}, {b} ,{c}", ["a", "b", "c"]),
        ("{uses {braces} inside}", ["uses {braces} inside"]),
        ("no braces", []),
    ],
)
def test_split_examples(text: str, expected: list[str]) -> None:
    assert split_examples(text) == expected


@pytest.mark.parametrize("prompt_file", corpus, ids=lambda path: path.stem)
def test_round_trip(prompt_file: Path) -> None:
    text = prompt_file.read_text(encoding="UTF-8")

    tree = parse_markdown(text)
    rendered = render_markdown(tree)

    assert squash(rendered) == squash(text)
    assert parse_markdown(rendered) == tree


def test_prose_after_section_examples_joins_the_body() -> None:
    tree = parse_markdown("# Rules\nIntro.\nExamples: {a}, {b}\nMore.")

    rules = tree.sections[0]
    assert [child.kind for child in rules.children] == [NodeKind.BODY, NodeKind.EXAMPLES]
    assert rules.body.content == "Intro.\nMore."

    rendered = render_markdown(tree)
    assert rendered == "# Rules\nIntro.\nMore.\nExamples: {a}, {b}"
    assert parse_markdown(rendered) == tree


def test_bare_bullet_is_an_empty_item() -> None:
    tree = parse_markdown("# Steps\n* first\n*\n* third")

    items = tree.sections[0].children
    assert [item.content for item in items] == ["first", "", "third"]
    assert [item.title for item in items] == ["1.", "2.", "3."]
