from pathlib import Path

import pytest

from actor.errors import ClassNamesAltered
from actor.rewriting import markdown_block, rephrase_candidate, structure_prompt
from llm.backends import ScriptedBackend
from llm.gateway import Gateway
from llm.models import Tag
from prompt_tree.parser import parse_markdown

prompts_dir = Path(__file__).parent.parent / "prompt_tree" / "prompts"

LABELS = ("(A)", "(B)", "(C)", "(D)", "(E)", "(F)")

REPHRASED = """Here is the new prompt:

```markdown
# Goal
Decide which single error class a translation contains.

# Classes
(A) Modifiers or Adjectives
(B) Numerical Values
(C) Negation or Antonyms
(D) Named Entities
(E) Dropped Content
(F) Facts

# Answer
Reply with the option, for example `(D)`.
```
"""


@pytest.fixture()
def salient():
    return parse_markdown((prompts_dir / "salient_translation.md").read_text(encoding="UTF-8"))


def gateway_for(tag: Tag, *replies: str) -> Gateway:
    return Gateway(ScriptedBackend(replies={tag: list(replies)}))


async def test_rephrased_prompt_keeping_the_labels(salient) -> None:
    gateway = gateway_for(Tag.REPHRASE, REPHRASED)

    rephrased = await rephrase_candidate(salient, LABELS, gateway)

    assert [section.title for section in rephrased.sections] == ["Goal", "Classes", "Answer"]
    assert "# Error Identification" in gateway.backend.requests[0].user_text


async def test_rephrased_prompt_dropping_a_label(salient) -> None:
    gateway = gateway_for(Tag.REPHRASE, REPHRASED.replace("(F) Facts\n", ""))

    with pytest.raises(ClassNamesAltered, match=r"\(F\)"):
        await rephrase_candidate(salient, LABELS, gateway)


async def test_labels_the_prompt_never_named_are_not_required(salient) -> None:
    gateway = gateway_for(Tag.REPHRASE, REPHRASED)

    rephrased = await rephrase_candidate(salient, LABELS + ("(G)",), gateway)

    assert len(rephrased.sections) == 3


async def test_flat_prompt_is_structured() -> None:
    flat = "Classify the sentence. Answer (A) or (B)."
    reply = "```\n# Task\nClassify the sentence.\n\n# Options\n(A) or (B)\n```"
    gateway = gateway_for(Tag.STRUCTURING, reply)

    tree = await structure_prompt(flat, gateway)

    assert [section.title for section in tree.sections] == ["Task", "Options"]
    assert gateway.backend.requests[0].user_text.endswith(flat + "\n")


@pytest.mark.parametrize(
    ("reply", "expected"),
    [
        ("```markdown\n# A\nx\n```", "# A\nx"),
        ("```md\n# A\n```\nand\n```\n# B\n```", "# B"),
        ("# Plain\ntext\n", "# Plain\ntext"),
    ],
)
def test_markdown_block(reply, expected) -> None:
    assert markdown_block(reply) == expected
