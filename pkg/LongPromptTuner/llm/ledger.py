from __future__ import annotations

import logging

from pydantic import BaseModel, Field

from llm.errors import BudgetExceeded
from llm.models import Tag

_logger = logging.getLogger(f"tuner.{__name__}")


def estimate_tokens(text: str) -> int:
    """Whitespace token count, used when the backend does not report usage."""
    return len(text.split())


class TagUsage(BaseModel):
    input_tokens: int = 0
    output_tokens: int = 0
    requests: int = 0
    failed_requests: int = 0
    approximate: bool = False

    @property
    def total_tokens(self) -> int:
        return self.input_tokens + self.output_tokens


class UsageRecord(BaseModel):
    tag: Tag
    input_tokens: int
    output_tokens: int
    approximate: bool = False


class UsageLedger(BaseModel):
    """Token accounting per request tag, with an optional cap and unit prices.

    Counters only ever grow. Failed requests are counted but add no tokens.
    """

    max_total_tokens: int | None = None
    input_price_per_mtok: float = 0.0
    output_price_per_mtok: float = 0.0
    per_tag: dict[Tag, TagUsage] = Field(default_factory=dict)
    records: list[UsageRecord] = Field(default_factory=list)

    @property
    def input_tokens(self) -> int:
        return sum(usage.input_tokens for usage in self.per_tag.values())

    @property
    def output_tokens(self) -> int:
        return sum(usage.output_tokens for usage in self.per_tag.values())

    @property
    def total_tokens(self) -> int:
        return self.input_tokens + self.output_tokens

    @property
    def requests(self) -> int:
        return sum(usage.requests for usage in self.per_tag.values())

    @property
    def approximate(self) -> bool:
        return any(usage.approximate for usage in self.per_tag.values())

    @property
    def cost(self) -> float:
        return (
            self.input_tokens * self.input_price_per_mtok
            + self.output_tokens * self.output_price_per_mtok
        ) / 1_000_000

    def check_budget(self, projected_tokens: int, *, reserved: int = 0) -> None:
        """:raises BudgetExceeded: `projected_tokens` more would cross the cap"""
        if self.max_total_tokens is None:
            return
        if self.total_tokens + reserved + projected_tokens > self.max_total_tokens:
            raise BudgetExceeded(
                f"{self.total_tokens} used + {reserved} reserved + {projected_tokens} projected "
                f"tokens exceed the cap of {self.max_total_tokens}"
            )

    def record(
        self, tag: Tag, *, input_tokens: int, output_tokens: int, approximate: bool = False
    ) -> None:
        usage = self.per_tag.setdefault(tag, TagUsage())
        usage.input_tokens += input_tokens
        usage.output_tokens += output_tokens
        usage.requests += 1
        usage.approximate |= approximate
        self.records.append(
            UsageRecord(
                tag=tag,
                input_tokens=input_tokens,
                output_tokens=output_tokens,
                approximate=approximate,
            )
        )

    def record_failure(self, tag: Tag) -> None:
        self.per_tag.setdefault(tag, TagUsage()).failed_requests += 1

    def summary(self) -> str:
        lines = [
            f"{tag}: {usage.requests} requests, {usage.input_tokens} in, "
            f"{usage.output_tokens} out" + (" (approximate)" if usage.approximate else "")
            for tag, usage in sorted(self.per_tag.items())
        ]
        lines.append(f"total: {self.total_tokens} tokens, cost {self.cost:.4f}")
        return "\n".join(lines)
