from __future__ import annotations

import asyncio
import logging
from collections.abc import Sequence

import numpy as np

from evaluation.errors import EmptyRecords
from evaluation.extraction import extract
from evaluation.metrics import compute_score, is_correct, outcomes_and_confusion
from evaluation.models import EvalResult, ExampleRecord, Misclassified, Prediction, TaskSpec
from llm.gateway import Gateway
from llm.models import Tag
from prompt_tree.nodes import text_digest

_logger = logging.getLogger(f"tuner.{__name__}")


class Evaluator:
    """Scores prompt texts on labelled records.

    Predictions are cached per (prompt digest, record id). Together with the temperature-0
    gateway cache this makes repeated evaluations free and identical.

    :param task: Label set, metric and extraction rule
    :param gateway: Where the model replies come from
    :param parallelism: Maximum number of predictions in flight
    """

    def __init__(self, task: TaskSpec, gateway: Gateway, *, parallelism: int = 8) -> None:
        self.task = task
        self.gateway = gateway
        self._parallelism = parallelism
        self._semaphore = asyncio.Semaphore(parallelism)
        self._predictions: dict[tuple[str, str], Prediction] = {}

    async def predict(self, prompt_text: str, record: ExampleRecord) -> Prediction:
        key = (text_digest(prompt_text), record.id)
        if key in self._predictions:
            return self._predictions[key]

        async with self._semaphore:
            user_text = self.task.wrap(prompt_text, record.input)
            reply = await self.gateway.ask(Tag.EVALUATION, user_text)
        prediction = extract(reply, self.task)
        self._predictions[key] = prediction
        return prediction

    async def score(self, prompt_text: str, records: Sequence[ExampleRecord]) -> EvalResult:
        """Score a prompt on records with the task metric.

        :raises EmptyRecords: No records given
        """
        if not records:
            raise EmptyRecords("Cannot score a prompt on zero records")

        predictions = await asyncio.gather(
            *(self.predict(prompt_text, record) for record in records)
        )
        outcomes, confusion = outcomes_and_confusion(records, predictions)
        return EvalResult(
            score=compute_score(self.task.metric, outcomes, confusion),
            per_example=outcomes,
            confusion=confusion,
        )

    async def misclassified(
        self,
        prompt_text: str,
        records: Sequence[ExampleRecord],
        limit: int,
        *,
        seed: int,
    ) -> list[Misclassified]:
        """Up to `limit` wrong predictions, in the order of a seeded shuffle of `records`.

        Records are evaluated in chunks, so a prompt with many errors stops early.
        """
        if limit < 1:
            raise ValueError(f"limit must be at least 1, got {limit}")

        order = np.random.default_rng(seed).permutation(len(records))
        shuffled = [records[index] for index in order]

        wrong: list[Misclassified] = []
        for start in range(0, len(shuffled), self._parallelism):
            chunk = shuffled[start : start + self._parallelism]
            predictions = await asyncio.gather(
                *(self.predict(prompt_text, record) for record in chunk)
            )
            for record, prediction in zip(chunk, predictions, strict=True):
                if not is_correct(record.gold, prediction):
                    wrong.append(Misclassified(record.id, record.input, record.gold, prediction))
            if len(wrong) >= limit:
                break

        _logger.debug("Found %d misclassified records", len(wrong))
        return wrong[:limit]
