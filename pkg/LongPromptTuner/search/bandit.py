"""UCB candidate selection over the whole candidate pool."""

from __future__ import annotations

import logging
import math
from collections.abc import Sequence
from typing import Protocol

import numpy as np

from evaluation.errors import EmptyRecords
from evaluation.models import EvalResult, ExampleRecord
from llm.errors import BackendUnavailable
from search.models import Candidate

_logger = logging.getLogger(f"tuner.{__name__}")


class Scorer(Protocol):
    async def score(self, prompt_text: str, records: Sequence[ExampleRecord]) -> EvalResult: ...


def ucb_score(candidate: Candidate, t: int, c: float) -> float:
    """Mean reward plus the exploration bonus ``c * sqrt(ln t / n)``.

    A candidate that was never evaluated scores infinity, so every candidate is tried once
    before any is tried twice.
    """
    if t < 1:
        raise ValueError(f"t must be at least 1, got {t}")
    if candidate.eval_count == 0 and not candidate.quarantined:
        return math.inf

    mean = candidate.mean or 0.0
    if c == 0 or candidate.eval_count == 0:
        return mean
    return float(mean + c * np.sqrt(np.log(t) / candidate.eval_count))


def rank_by_mean(candidates: Sequence[Candidate]) -> list[Candidate]:
    """Highest mean first; ties go to the younger candidate, then to the lower id.

    Candidates without any evaluation come last.
    """

    def key(candidate: Candidate) -> tuple[float, int, str]:
        mean = candidate.mean
        return (-mean if mean is not None else math.inf, -candidate.born_step, candidate.id)

    return sorted(candidates, key=key)


async def ucb_select(
    pool: Sequence[Candidate],
    val_records: Sequence[ExampleRecord],
    scorer: Scorer,
    *,
    rounds: int,
    sample_size: int,
    c: float,
    top_b: int,
    rng: np.random.Generator,
) -> list[Candidate]:
    """Spend `rounds` evaluations on the candidates with the highest UCB and return the
    `top_b` candidates by mean reward.

    Each round scores the argmax candidate on a fresh uniform sample of validation
    records and folds the reward into its statistics, weighted by the sample size.
    A candidate whose evaluation fails before it ever succeeded is quarantined.

    :param pool: All candidates; their statistics are updated in place
    :param val_records: The validation split
    :param scorer: Scores a prompt text on records
    :param rounds: Number of bandit rounds
    :param sample_size: Records per round (at most the size of the split)
    :param c: Exploration weight
    :param top_b: How many candidates to return
    :param rng: Source of the per-round samples
    :return: Up to `top_b` candidates that are not quarantined, best mean first
    :raises EmptyRecords: The validation split is empty
    """
    if not pool:
        raise ValueError("Cannot select from an empty candidate pool")
    if not val_records:
        raise EmptyRecords("UCB selection needs validation records")

    size = min(sample_size, len(val_records))
    for t in range(1, rounds + 1):
        active = [candidate for candidate in pool if not candidate.quarantined]
        if not active:
            _logger.warning("Every candidate is quarantined, stopping after %d rounds", t - 1)
            break

        # max() keeps the first of equal scores, so ties go to the older candidate
        chosen = max(active, key=lambda candidate: ucb_score(candidate, t, c))
        sample = [val_records[index] for index in rng.choice(len(val_records), size, replace=False)]
        try:
            result = await scorer.score(chosen.rendered, sample)
        except BackendUnavailable:
            _logger.exception("Evaluating candidate %s failed", chosen.id)
            if chosen.eval_count == 0:
                _logger.warning("Quarantining candidate %s", chosen.id)
                chosen.quarantined = True
            continue
        chosen.observe(result.score, len(sample))

    return rank_by_mean([candidate for candidate in pool if not candidate.quarantined])[:top_b]
