"""The optimization loop: select with UCB, reflect, aggregate, expand, repeat."""

from __future__ import annotations

import asyncio
import logging
from collections.abc import Awaitable, Callable, Mapping, Sequence
from pathlib import Path

import numpy as np

from actor.errors import ClassNamesAltered
from actor.proposals import apply_structural, expand_group
from actor.rewriting import rephrase_candidate, structure_prompt
from critic.aggregation import aggregate_node_based, aggregate_none, cap_groups
from critic.models import Reflection, ReflectionGroup
from critic.reflections import aggregate_pattern_based, error_reflections, structural_reflection
from errors import TunerError
from evaluation.errors import EmptyRecords
from evaluation.evaluator import Evaluator
from evaluation.models import ExampleRecord, Misclassified, Split, TaskSpec
from llm.errors import BudgetExceeded, GatewayError
from llm.gateway import Gateway
from prompt_tree.nodes import PromptTree
from prompt_tree.parser import parse_markdown
from search.bandit import ucb_select
from search.checkpoint import Checkpoint, write_checkpoint
from search.models import (
    ActionRecord,
    Aggregation,
    Candidate,
    Lineage,
    Origin,
    RankedPrompt,
    RunState,
    RunStatus,
    SearchConfig,
    StepRecord,
)

_logger = logging.getLogger(f"tuner.{__name__}")

StepCallback = Callable[[RunState], Awaitable[None]]
Child = tuple[PromptTree, Lineage]


class Optimizer:
    """Runs the beam search over prompt candidates.

    :param task: Label set, metric and extraction rule
    :param datasets: Records per split; Train feeds the critic, Val the bandit
    :param config: Beam and bandit settings
    :param gateway: Shared by the critic, the actor and the evaluator
    :param evaluator: Defaults to an evaluator on `gateway`
    :param run_dir: Where checkpoints go; none are written without it
    :param on_step: Awaited after every checkpoint
    """

    def __init__(
        self,
        task: TaskSpec,
        datasets: Mapping[Split, Sequence[ExampleRecord]],
        config: SearchConfig,
        gateway: Gateway,
        *,
        evaluator: Evaluator | None = None,
        run_dir: Path | None = None,
        on_step: StepCallback | None = None,
    ) -> None:
        self.task = task
        self.config = config
        self.gateway = gateway
        self.evaluator = evaluator if evaluator is not None else Evaluator(task, gateway)
        self.train = list(datasets.get(Split.TRAIN, ()))
        self.val = list(datasets.get(Split.VAL, ()))
        if not self.train or not self.val:
            raise EmptyRecords("Optimizing needs Train and Val records")

        self._run_dir = run_dir
        self._on_step = on_step

    async def initial_state(self, initial_prompt_text: str) -> RunState:
        tree = parse_markdown(initial_prompt_text)
        if tree.is_unstructured and self.config.structure_unstructured:
            _logger.info("The initial prompt has no headings, asking for a structured version")
            tree = await structure_prompt(initial_prompt_text, self.gateway)
        return RunState.initial(tree, self.config.seed)

    async def optimize(self, initial_prompt_text: str) -> list[RankedPrompt]:
        """Optimize a prompt from scratch.

        :return: The finalists, best full-validation score first
        :raises EmptyInput: The initial prompt is empty
        :raises GatewayError: The backend failed beyond recovery or the budget ran out;
          the last checkpoint stays resumable
        """
        state = await self.initial_state(initial_prompt_text)
        await self._checkpoint(state)
        return await self.run(state)

    async def resume(self, checkpoint: Checkpoint) -> list[RankedPrompt]:
        """Continue a run from a checkpoint, exactly as if it had never stopped."""
        state = checkpoint.restore()
        self.gateway.backend.restore(checkpoint.backend_state)
        if state.status in (RunStatus.COMPLETE, RunStatus.STALLED):
            _logger.info("Run already finished at step %d (%s)", state.step, state.status)
            return state.ranking

        state.status = RunStatus.RUNNING
        _logger.info("Resuming at step %d with %d candidates", state.step, len(state.candidates))
        return await self.run(state)

    async def run(self, state: RunState) -> list[RankedPrompt]:
        try:
            while state.status is RunStatus.RUNNING:
                if state.step >= self.config.max_steps:
                    break
                if len(state.candidates) >= self.config.candidate_budget:
                    _logger.info("Candidate budget of %d reached", self.config.candidate_budget)
                    break
                await self.run_step(state)
                await self._checkpoint(state)

            if state.status is RunStatus.RUNNING:
                state.status = RunStatus.COMPLETE
            state.ranking = await self.finalize(state)
        except GatewayError:
            state.status = RunStatus.ABORTED
            _logger.critical("Aborting the run at step %d", state.step + 1)
            raise

        await self._checkpoint(state)
        return state.ranking

    async def run_step(self, state: RunState) -> None:
        """One beam step: select K candidates, expand each into up to g new ones."""
        step = state.step + 1
        config = self.config
        selected = await ucb_select(
            state.candidates,
            self.val,
            self.evaluator,
            rounds=config.ucb_rounds,
            sample_size=config.ucb_sample_size,
            c=config.ucb_c,
            top_b=config.beam_select,
            rng=state.rng,
        )
        seeds = [int(seed) for seed in state.rng.integers(0, 2**32, size=len(selected))]
        _logger.info("Step %d expands %s", step, ", ".join(c.id for c in selected))

        semaphore = asyncio.Semaphore(config.expansion_concurrency)

        async def expand(candidate: Candidate, seed: int) -> list[Child]:
            async with semaphore:
                return await self._expand(candidate, seed, step)

        expansions = await asyncio.gather(*map(expand, selected, seeds))
        children = [child for expansion in expansions for child in expansion]

        remaining = config.candidate_budget - len(state.candidates)
        if len(children) > remaining:
            _logger.warning("Keeping %d of %d new candidates (budget)", remaining, len(children))
            children = children[:remaining]

        created = []
        for tree, lineage in children:
            candidate = Candidate(id=state.next_id, tree=tree, born_step=step, lineage=lineage)
            state.candidates.append(candidate)
            created.append(candidate.id)

        means = [c.mean for c in state.candidates if c.mean is not None and not c.quarantined]
        state.steps.append(
            StepRecord(
                step=step,
                selected=[candidate.id for candidate in selected],
                created=created,
                best_mean=max(means) if means else None,
                average_mean=float(np.mean(means)) if means else None,
            )
        )
        state.step = step
        if not created:
            _logger.warning("Step %d produced no candidates, stopping the run", step)
            state.status = RunStatus.STALLED
            state.stalled_step = step

    async def _expand(self, candidate: Candidate, seed: int, step: int) -> list[Child]:
        try:
            return await self._expand_candidate(candidate, seed, step)
        except BudgetExceeded:
            raise
        except TunerError:
            _logger.exception("Skipping the expansion of candidate %s", candidate.id)
            return []

    async def _expand_candidate(self, candidate: Candidate, seed: int, step: int) -> list[Child]:
        tree, gateway = candidate.tree, self.gateway
        structural = await structural_reflection(tree, gateway)
        batch = await self.evaluator.misclassified(
            candidate.rendered, self.train, self.config.error_batch_limit, seed=seed
        )
        update = await apply_structural(tree, structural, gateway)

        children: list[Child] = []
        if not batch:
            _logger.info("Candidate %s makes no errors on the sampled records", candidate.id)
        groups = await self._groups(tree, batch) if batch else []
        for group in groups:
            try:
                expansion = await expand_group(update, group, gateway)
            except BudgetExceeded:
                raise
            except TunerError:
                _logger.exception("Skipping group %s of candidate %s", group.group_id, candidate.id)
                continue
            lineage = Lineage(
                parent_id=candidate.id,
                step=step,
                origin=Origin.EXPANSION,
                group_id=group.group_id,
                reflection_digests=_digests(structural, group),
                actions=[ActionRecord.from_outcome(outcome) for outcome in expansion.outcomes],
                rejected=expansion.rejected,
            )
            children.append((expansion.tree, lineage))

        if self.config.rephrase_enabled:
            try:
                rephrased = await rephrase_candidate(tree, self.task.label_set, gateway)
            except ClassNamesAltered as e:
                _logger.warning("Discarding the rephrased %s: %s", candidate.id, e)
            else:
                lineage = Lineage(parent_id=candidate.id, step=step, origin=Origin.REPHRASE)
                children.append((rephrased, lineage))
        return children

    async def _groups(
        self, tree: PromptTree, batch: Sequence[Misclassified]
    ) -> list[ReflectionGroup]:
        limit = self.config.groups
        match self.config.aggregation:
            case Aggregation.PATTERN:
                return await aggregate_pattern_based(tree, batch, limit, self.gateway)
            case Aggregation.NODE:
                assessment = await error_reflections(tree, batch, self.gateway)
                return cap_groups(aggregate_node_based(assessment.reflections), limit)
            case Aggregation.NONE:
                assessment = await error_reflections(tree, batch, self.gateway)
                return cap_groups(aggregate_none(assessment.reflections), limit)

    async def finalize(self, state: RunState) -> list[RankedPrompt]:
        """Pick the finalists with a last round of UCB selection and rank them by their
        score on the full validation split."""
        finalists = await ucb_select(
            state.candidates,
            self.val,
            self.evaluator,
            rounds=self.config.ucb_rounds,
            sample_size=self.config.ucb_sample_size,
            c=self.config.ucb_c,
            top_b=self.config.top_b,
            rng=state.rng,
        )
        for candidate in finalists:
            result = await self.evaluator.score(candidate.rendered, self.val)
            candidate.final_score = result.score

        ranked = sorted(
            finalists, key=lambda c: (-(c.final_score or 0.0), -c.born_step, c.id)
        )
        return [
            RankedPrompt(
                candidate_id=candidate.id,
                text=candidate.rendered,
                score=candidate.final_score or 0.0,
                lineage=candidate.lineage,
            )
            for candidate in ranked
        ]

    async def _checkpoint(self, state: RunState) -> None:
        await self.gateway.flush_cache()
        if self._run_dir is not None:
            checkpoint = Checkpoint.capture(state, self.config, self.gateway.backend.snapshot())
            await write_checkpoint(self._run_dir, checkpoint)
        if self._on_step is not None:
            await self._on_step(state)


def _digests(structural: Reflection, group: ReflectionGroup) -> list[str]:
    return [structural.digest, *(member.digest for member in group.members)]
