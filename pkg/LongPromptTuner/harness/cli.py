"""What the subcommands of the command line do, apart from parsing arguments."""

from __future__ import annotations

import json
import logging
from pathlib import Path

import aiofiles

from configuration import LoadedConfig, RunConfig, parse_config
from evaluation.datasets import load_datasets
from harness.errors import ConfigError, EmptyRun, RunAlreadyComplete
from harness.reports import (
    compare_prompts,
    diff_trees,
    load_finished_steps,
    report_action_distribution,
    report_curve,
)
from harness.run_store import (
    CONFIG_SNAPSHOT,
    LEDGER_FILE,
    MANIFEST_FILE,
    RunManifest,
    RunReport,
    RunStore,
)
from llm.backends import LiveBackend, ScriptedBackend
from llm.gateway import Gateway
from llm.ledger import UsageLedger
from prompt_tree.nodes import PromptTree
from prompt_tree.parser import parse_markdown
from prompt_tree.paths import enumerate_paths
from search.checkpoint import latest_checkpoint, read_checkpoint
from search.models import CandidateRecord, RankedPrompt, RunStatus
from search.optimizer import Optimizer

_logger = logging.getLogger(f"tuner.{__name__}")

_OUTLINE_WIDTH = 60


def build_gateway(config: RunConfig, cache_file: Path | None = None) -> Gateway:
    profile = config.backend
    if profile.kind == "live":
        backend = LiveBackend(
            endpoint=profile.endpoint,
            model=profile.model,
            token=profile.token(),
            extra_payload=profile.extra_payload,
            timeout=profile.timeout,
        )
    else:
        backend = ScriptedBackend(fixtures_dir=profile.fixtures_dir)

    ledger = UsageLedger(
        max_total_tokens=config.ledger.max_total_tokens,
        input_price_per_mtok=config.ledger.input_price_per_mtok,
        output_price_per_mtok=config.ledger.output_price_per_mtok,
    )
    return Gateway(
        backend,
        ledger=ledger,
        parallelism=profile.parallelism,
        max_output=config.limits.max_output,
        generation_temperature=profile.generation_temperature,
        cache_file=cache_file,
        retry_attempts=profile.retry_attempts,
        retry_wait=profile.retry_wait,
    )


def outline(tree: PromptTree) -> str:
    """Headings and list items of a tree, indented by depth."""
    lines = []
    for path, node in enumerate_paths(tree):
        if node.kind.is_section:
            lines.append("  " * (len(path) - 1) + node.title)
        elif node.kind.is_list_item:
            text = node.content.splitlines()[0] if node.content else ""
            if len(text) > _OUTLINE_WIDTH:
                text = text[: _OUTLINE_WIDTH - 3] + "..."
            lines.append("  " * (len(path) - 1) + f"{node.title} {text}".rstrip())
    return "\n".join(lines) + "\n"


def read_prompt(path: Path) -> PromptTree:
    """:raises ConfigError: The prompt file cannot be read"""
    try:
        text = path.read_text(encoding="UTF-8")
    except OSError as e:
        raise ConfigError(f"Cannot read the prompt file at '{path}': {e}") from e
    return parse_markdown(text)


def dry_run(loaded: LoadedConfig) -> str:
    """Check everything an optimization needs without a single generation call.

    :return: The outline of the initial prompt
    :raises DatasetNotFound: A dataset file is missing
    :raises DatasetInvalid: A dataset file holds bad records
    """
    config = loaded.config
    datasets = load_datasets(config.datasets, config.task)
    tree = read_prompt(config.run.initial_prompt)
    if tree.is_unstructured and not config.search.structure_unstructured:
        _logger.warning("The initial prompt has no headings and structuring is off")
    _logger.info(
        "Configuration %s is valid: %s",
        loaded.path,
        ", ".join(f"{len(records)} {split} records" for split, records in datasets.items()),
    )
    return outline(tree)


def run_dir_for(config: RunConfig) -> Path:
    return config.run.output_dir / f"{config.task.name}-seed{config.run.seed}"


async def optimize(loaded: LoadedConfig) -> RunReport:
    """Start a new run in the output directory of the configuration.

    :raises ConfigError: The run directory already holds a run
    """
    config = loaded.config
    run_dir = run_dir_for(config)
    if run_dir.exists() and latest_checkpoint(run_dir) is not None:
        raise ConfigError(f"{run_dir} already holds a run, resume it with --resume {run_dir}")

    datasets = load_datasets(config.datasets, config.task)
    initial_text = config.run.initial_prompt.read_text(encoding="UTF-8")
    run_dir.mkdir(parents=True, exist_ok=True)
    store = RunStore(run_dir)
    await store.write_config(loaded.path, loaded.raw)

    gateway = build_gateway(config, store.cache_file)
    optimizer = Optimizer(
        config.task,
        datasets,
        config.search_config,
        gateway,
        run_dir=run_dir,
        on_step=store.record_step,
    )
    _logger.info("Starting run %s", run_dir)
    try:
        ranking = await optimizer.optimize(initial_text)
    finally:
        await store.write_ledger(gateway.ledger)
    return await _finish(store, ranking, gateway.ledger)


def load_run_config(run_dir: Path) -> LoadedConfig:
    """The configuration a run was started with, taken from its snapshot."""
    snapshot = run_dir / CONFIG_SNAPSHOT
    if not snapshot.is_file():
        raise ConfigError(f"{run_dir} holds no configuration snapshot")
    manifest = RunManifest.model_validate_json((run_dir / MANIFEST_FILE).read_bytes())
    return parse_config(snapshot.read_bytes(), manifest.config_path)


async def resume(run_dir: Path) -> RunReport:
    """Continue a run from its latest checkpoint.

    :raises EmptyRun: The run directory holds no checkpoint
    :raises RunAlreadyComplete: The run finished before
    """
    path = latest_checkpoint(run_dir)
    if path is None:
        raise EmptyRun(f"{run_dir} holds no checkpoint to resume from")
    checkpoint = read_checkpoint(path)
    if checkpoint.status in (RunStatus.COMPLETE, RunStatus.STALLED):
        raise RunAlreadyComplete(f"The run in {run_dir} is already complete ({checkpoint.status})")

    loaded = load_run_config(run_dir)
    config = loaded.config
    if loaded.path.is_file() and loaded.path.read_bytes() != loaded.raw:
        _logger.warning("%s changed since the run started, using the snapshot", loaded.path)

    store = RunStore(run_dir)
    gateway = build_gateway(config, store.cache_file)
    if (run_dir / LEDGER_FILE).is_file():
        gateway.ledger = store.read_ledger().model_copy(
            update={"max_total_tokens": config.ledger.max_total_tokens}
        )
    optimizer = Optimizer(
        config.task,
        load_datasets(config.datasets, config.task),
        checkpoint.config,
        gateway,
        run_dir=run_dir,
        on_step=store.record_step,
    )
    _logger.info("Resuming run %s from %s", run_dir, path.name)
    try:
        ranking = await optimizer.resume(checkpoint)
    finally:
        await store.write_ledger(gateway.ledger)
    return await _finish(store, ranking, gateway.ledger)


async def _finish(store: RunStore, ranking: list[RankedPrompt], ledger: UsageLedger) -> RunReport:
    checkpoint = read_checkpoint(latest_checkpoint(store.run_dir))
    report = RunReport(
        status=checkpoint.status,
        steps=checkpoint.step,
        candidates=len(checkpoint.candidates),
        ranking=ranking,
        ledger=ledger,
    )
    await store.write_report(report)
    _logger.info("Run finished (%s), usage:\n%s", report.status, ledger.summary())
    return report


def summarize(report: RunReport) -> str:
    lines = [f"{report.status} after {report.steps} steps with {report.candidates} candidates"]
    lines += [
        f"{position}. {entry.candidate_id} {entry.score:.4f}"
        for position, entry in enumerate(report.ranking, start=1)
    ]
    return "\n".join(lines) + "\n"


def _candidate(run_dir: Path, candidate_id: str | None) -> CandidateRecord:
    """A stored candidate; the best ranked one when no id is given."""
    checkpoint = load_finished_steps(run_dir)
    if candidate_id is None:
        if not checkpoint.ranking:
            raise EmptyRun(f"The run in {run_dir} has no ranking yet, name a candidate")
        candidate_id = checkpoint.ranking[0].candidate_id
    for record in checkpoint.candidates:
        if record.id == candidate_id:
            return record
    raise EmptyRun(f"The run in {run_dir} has no candidate {candidate_id}")


async def report_diff(run_dir: Path, candidate_id: str | None, parent_id: str | None) -> str:
    """Diff a candidate against its parent, or against any other candidate."""
    child = _candidate(run_dir, candidate_id)
    parent_id = parent_id or child.lineage.parent_id
    if parent_id is None:
        raise EmptyRun(f"Candidate {child.id} has no parent to compare with")
    parent = _candidate(run_dir, parent_id)

    diff = diff_trees(parent.to_candidate().tree, child.to_candidate().tree)
    async with aiofiles.open(run_dir / f"diff-{parent.id}-{child.id}.json", "w") as f:
        await f.write(json.dumps(diff.to_json(), indent=2, ensure_ascii=False))
    entries = [f"{entry.change:<8} {entry.path}" for entry in diff.entries]
    return "\n".join([*entries, "", diff.text]) if entries else "no differences\n"


async def report_actions(run_dir: Path) -> str:
    return (await report_action_distribution(run_dir)).to_table()


async def report_curve_text(run_dir: Path) -> str:
    return (await report_curve(run_dir)).to_text()


async def report_compare(run_dir: Path, candidate_id: str | None) -> str:
    """Ask the judge to compare the initial prompt with a candidate (the best by default)."""
    final = _candidate(run_dir, candidate_id)
    initial = _candidate(run_dir, "c0000")
    gateway = build_gateway(load_run_config(run_dir).config)

    scores = await compare_prompts(initial.rendered, final.rendered, gateway)
    async with aiofiles.open(run_dir / f"compare-{final.id}.json", "w") as f:
        await f.write(scores.model_dump_json(indent=2, by_alias=True))
    return (
        f"Information Preservation: {scores.information_preservation}\n"
        f"Overall Dissimilarity: {scores.overall_dissimilarity}\n"
        f"{scores.explanation}\n"
    )
