"""Artifacts of one run directory.

Layout::

    run.json                 where the configuration was read from
    config.snapshot          the run configuration, byte for byte
    step-NNN.checkpoint      one per completed step (see search.checkpoint)
    candidates/<id>.md       rendered prompt of every candidate
    candidates/<id>.json     tree and lineage of every candidate
    lineage.json             parent links and actions of the whole pool
    ledger.json              token usage at shutdown
    report.json              ranking and usage of the finished run
    generations.json         cache of deterministic generations
"""

from __future__ import annotations

import asyncio
import logging
from pathlib import Path
from typing import Final, Literal

import aiofiles
from pydantic import BaseModel

from llm.ledger import UsageLedger
from search.models import Candidate, CandidateRecord, Lineage, RankedPrompt, RunState, RunStatus

_logger = logging.getLogger(f"tuner.{__name__}")

RUN_FORMAT: Final = "longprompttuner.run/1"

MANIFEST_FILE: Final = "run.json"
CONFIG_SNAPSHOT: Final = "config.snapshot"
LINEAGE_FILE: Final = "lineage.json"
LEDGER_FILE: Final = "ledger.json"
REPORT_FILE: Final = "report.json"
CACHE_FILE: Final = "generations.json"


class LineageGraph(BaseModel):
    format: Literal["longprompttuner.run/1"] = RUN_FORMAT
    lineage: dict[str, Lineage]

    def children_of(self, candidate_id: str) -> list[str]:
        return [child for child, entry in self.lineage.items() if entry.parent_id == candidate_id]


class RunManifest(BaseModel):
    format: Literal["longprompttuner.run/1"] = RUN_FORMAT
    config_path: Path


class RunReport(BaseModel):
    format: Literal["longprompttuner.run/1"] = RUN_FORMAT
    status: RunStatus
    steps: int
    candidates: int
    ranking: list[RankedPrompt]
    ledger: UsageLedger


class RunStore:
    def __init__(self, run_dir: Path) -> None:
        """Keep the candidates of a run in its run directory, each one exactly once."""
        self.run_dir = run_dir
        self.candidates_dir = run_dir / "candidates"
        self._stored_ids: set[str] = set()

        self._store_lock = asyncio.Lock()

        if self.candidates_dir.exists():
            stored = [path.stem for path in self.candidates_dir.glob("*.json")]
            self._stored_ids.update(stored)
            _logger.info("Loaded %d previously stored candidates", len(stored))
        else:
            _logger.info("Starting with a fresh candidate store (%s)", self.candidates_dir)
            self.candidates_dir.mkdir(parents=True)

    @property
    def cache_file(self) -> Path:
        return self.run_dir / CACHE_FILE

    def is_stored(self, candidate_id: str) -> bool:
        return candidate_id in self._stored_ids

    async def store_candidate(self, candidate: Candidate) -> None:
        """Write a candidate's prompt and record. Raise ValueError if it was stored before."""
        async with self._store_lock:
            if self.is_stored(candidate.id):
                raise ValueError(f"Candidate {candidate.id} is already stored")

            self._stored_ids.add(candidate.id)
            record = CandidateRecord.from_candidate(candidate)
            async with aiofiles.open(self.candidates_dir / f"{candidate.id}.md", "w") as f:
                await f.write(candidate.rendered + "\n")
            async with aiofiles.open(self.candidates_dir / f"{candidate.id}.json", "w") as f:
                await f.write(record.model_dump_json(indent=2))

    async def record_step(self, state: RunState) -> None:
        """Store the candidates new since the last step and rewrite the lineage graph."""
        new = [candidate for candidate in state.candidates if not self.is_stored(candidate.id)]
        for candidate in new:
            await self.store_candidate(candidate)
        if new:
            _logger.debug("Stored %d new candidates after step %d", len(new), state.step)

        graph = LineageGraph(lineage={c.id: c.lineage for c in state.candidates})
        await self._write(LINEAGE_FILE, graph.model_dump_json(indent=2))

    def read_candidate(self, candidate_id: str) -> CandidateRecord:
        path = self.candidates_dir / f"{candidate_id}.json"
        return CandidateRecord.model_validate_json(path.read_bytes())

    def read_lineage(self) -> LineageGraph:
        return LineageGraph.model_validate_json((self.run_dir / LINEAGE_FILE).read_bytes())

    async def write_config(self, config_path: Path, config_bytes: bytes) -> None:
        """Snapshot the configuration a new run starts from."""
        async with aiofiles.open(self.run_dir / CONFIG_SNAPSHOT, "wb") as f:
            await f.write(config_bytes)
        await self._write(MANIFEST_FILE, RunManifest(config_path=config_path).model_dump_json())

    async def write_ledger(self, ledger: UsageLedger) -> None:
        await self._write(LEDGER_FILE, ledger.model_dump_json(indent=2))

    def read_ledger(self) -> UsageLedger:
        return UsageLedger.model_validate_json((self.run_dir / LEDGER_FILE).read_bytes())

    async def write_report(self, report: RunReport) -> None:
        await self._write(REPORT_FILE, report.model_dump_json(indent=2))

    def read_report(self) -> RunReport:
        return RunReport.model_validate_json((self.run_dir / REPORT_FILE).read_bytes())

    async def _write(self, name: str, text: str) -> None:
        async with aiofiles.open(self.run_dir / name, "w") as f:
            await f.write(text)
