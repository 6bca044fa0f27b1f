"""Self-contained run checkpoints, one versioned JSON file per completed step."""

from __future__ import annotations

import logging
import re
from pathlib import Path
from typing import Any, Final, Literal

import aiofiles
import numpy as np
from pydantic import BaseModel

from search.models import (
    CandidateRecord,
    RankedPrompt,
    RunState,
    RunStatus,
    SearchConfig,
    StepRecord,
)

_logger = logging.getLogger(f"tuner.{__name__}")

CHECKPOINT_FORMAT: Final = "longprompttuner.checkpoint/1"
_CHECKPOINT_NAME: Final = re.compile(r"^step-(\d{3,})\.checkpoint$")


class Checkpoint(BaseModel):
    format: Literal["longprompttuner.checkpoint/1"] = CHECKPOINT_FORMAT
    config: SearchConfig
    step: int
    status: RunStatus
    stalled_step: int | None = None
    candidates: list[CandidateRecord]
    steps: list[StepRecord]
    ranking: list[RankedPrompt] = []
    rng_state: dict[str, Any]
    backend_state: dict[str, int] = {}

    @classmethod
    def capture(
        cls, state: RunState, config: SearchConfig, backend_state: dict[str, int]
    ) -> Checkpoint:
        return cls(
            config=config,
            step=state.step,
            status=state.status,
            stalled_step=state.stalled_step,
            candidates=[CandidateRecord.from_candidate(c) for c in state.candidates],
            steps=list(state.steps),
            ranking=list(state.ranking),
            rng_state=state.rng.bit_generator.state,
            backend_state=dict(backend_state),
        )

    def restore(self) -> RunState:
        rng = np.random.default_rng()
        rng.bit_generator.state = self.rng_state
        return RunState(
            candidates=[record.to_candidate() for record in self.candidates],
            rng=rng,
            step=self.step,
            steps=list(self.steps),
            status=self.status,
            stalled_step=self.stalled_step,
            ranking=list(self.ranking),
        )


def checkpoint_path(run_dir: Path, step: int) -> Path:
    return run_dir / f"step-{step:03d}.checkpoint"


async def write_checkpoint(run_dir: Path, checkpoint: Checkpoint) -> Path:
    path = checkpoint_path(run_dir, checkpoint.step)
    async with aiofiles.open(path, "w") as f:
        await f.write(checkpoint.model_dump_json(indent=2))
    _logger.info("Wrote checkpoint %s", path)
    return path


def read_checkpoint(path: Path) -> Checkpoint:
    return Checkpoint.model_validate_json(path.read_bytes())


def latest_checkpoint(run_dir: Path) -> Path | None:
    """The checkpoint of the highest step in a run directory, if there is any."""
    steps = {}
    for path in run_dir.glob("step-*.checkpoint"):
        if match := _CHECKPOINT_NAME.match(path.name):
            steps[int(match.group(1))] = path
    return steps[max(steps)] if steps else None
