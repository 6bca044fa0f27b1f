from __future__ import annotations

import functools
from pathlib import Path

TEMPLATES_DIR = Path(__file__).resolve().parent.parent / "templates"


@functools.cache
def load_template(name: str) -> str:
    return (TEMPLATES_DIR / f"{name}.md").read_text(encoding="UTF-8")


def fill_template(name: str, **values: str) -> str:
    """Substitute ``{key}`` and ``#key#`` placeholders of a template.

    Only the given keys are replaced, so JSON braces in the template text stay intact.
    """
    text = load_template(name)
    for key, value in values.items():
        text = text.replace(f"{{{key}}}", value).replace(f"#{key}#", value)
    return text
