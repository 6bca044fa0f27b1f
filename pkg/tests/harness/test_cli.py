import json
import logging
from pathlib import Path

import numpy as np
import pytest

import tuner
from configuration import load_config
from harness import cli
from llm.ledger import UsageLedger
from prompt_tree.nodes import node_to_dict
from prompt_tree.parser import parse_markdown
from search.checkpoint import Checkpoint, write_checkpoint
from search.models import CandidateRecord, Lineage, Origin, RunStatus, SearchConfig, StepRecord

ROOT = Path(__file__).resolve().parent.parent.parent
SALIENT_CONFIG = ROOT / "LongPromptTuner" / "config.toml"
SALIENT_PROMPT = ROOT / "tests" / "prompt_tree" / "prompts" / "salient_translation.md"

SCRIPTED_CONFIG = """
[task]
name = "picker"
label_set = ["(A)", "(B)"]

[datasets]
train = ["data/train.jsonl"]
val = ["data/val.jsonl"]

[search]
max_steps = 0
ucb_rounds = 2
ucb_sample_size = 2

[backend]
kind = "scripted"
fixtures_dir = "fixtures"

[run]
initial_prompt = "prompt.md"
output_dir = "runs"
seed = 3
"""


@pytest.fixture(autouse=True)
def no_log_handlers(monkeypatch) -> None:
    monkeypatch.setattr(tuner, "_setup_logging", lambda level="INFO": None)


@pytest.fixture
def scripted_config(tmp_path: Path) -> Path:
    (tmp_path / "data").mkdir()
    lines = [
        {"id": "a", "input": "first case", "label": "(A)"},
        {"id": "b", "input": "second case", "label": "(B)"},
    ]
    for split in ("train", "val"):
        text = "".join(json.dumps({**line, "id": f"{split}-{line['id']}"}) + "\n" for line in lines)
        (tmp_path / "data" / f"{split}.jsonl").write_text(text)
    (tmp_path / "prompt.md").write_text("# Task\nPick the option.\n\n# Options\n(A) one\n(B) two\n")
    evaluation = tmp_path / "fixtures" / "Evaluation"
    evaluation.mkdir(parents=True)
    for ordinal in range(2):
        (evaluation / f"{ordinal:03d}.txt").write_text("The answer is (A)")

    config = tmp_path / "config.toml"
    config.write_text(SCRIPTED_CONFIG)
    return config


def top_level(outline: str) -> list[str]:
    return [line for line in outline.splitlines() if line and not line.startswith(" ")]


def test_dry_run_prints_the_outline() -> None:
    outline = cli.dry_run(load_config(SALIENT_CONFIG))

    assert top_level(outline) == [
        "Task",
        "Error Identification",
        "Performance Analysis",
        "Additional points",
        "Options",
        "Output format",
    ]
    assert "\n  1. Named entities: Look for changes in names" in outline


def test_dry_run_command(capsys) -> None:
    assert tuner.main(["optimize", "--config", str(SALIENT_CONFIG), "--dry-run"]) == 0

    assert len(top_level(capsys.readouterr().out)) == 6


def test_parse_command(capsys) -> None:
    assert tuner.main(["parse", str(SALIENT_PROMPT)]) == 0

    assert top_level(capsys.readouterr().out)[0] == "Task"


def test_missing_dataset_file(scripted_config: Path, caplog) -> None:
    (scripted_config.parent / "data" / "val.jsonl").unlink()

    with caplog.at_level(logging.CRITICAL):
        status = tuner.main(["optimize", "--config", str(scripted_config), "--dry-run"])

    assert status == tuner.EXIT_DATASET
    assert "DatasetNotFound" in caplog.text
    assert "val.jsonl" in caplog.text


@pytest.mark.parametrize(
    ("change", "message"),
    [
        (lambda text: text + "\n[extra]\nkey = 1\n", "extra"),
        (lambda text: text.replace('kind = "scripted"', 'kind = "live"'), "live backend"),
        (lambda text: text.replace("max_steps = 0", "max_steps = -1"), "max_steps"),
        (lambda text: text.replace("[task]", "[task"), "not valid TOML"),
    ],
)
def test_invalid_config(scripted_config: Path, caplog, change, message) -> None:
    scripted_config.write_text(change(scripted_config.read_text()))

    assert tuner.main(["validate-config", str(scripted_config)]) == tuner.EXIT_CONFIG
    assert message in caplog.text


def test_missing_config_file(tmp_path: Path) -> None:
    assert tuner.main(["validate-config", str(tmp_path / "nowhere.toml")]) == tuner.EXIT_CONFIG


def test_local_config_is_preferred(scripted_config: Path) -> None:
    local = scripted_config.parent / "config.local.toml"
    local.write_text(scripted_config.read_text().replace("seed = 3", "seed = 4"))

    loaded = load_config(scripted_config)

    assert loaded.path == local.resolve()
    assert loaded.config.search_config.seed == 4


def test_relative_paths_follow_the_config_file(scripted_config: Path) -> None:
    config = load_config(scripted_config).config

    assert config.datasets.train == [scripted_config.parent / "data" / "train.jsonl"]
    assert config.backend.fixtures_dir == scripted_config.parent / "fixtures"
    assert config.run.output_dir == scripted_config.parent / "runs"


def test_live_backend_without_token(scripted_config: Path, monkeypatch) -> None:
    monkeypatch.delenv("TUNER_TEST_TOKEN", raising=False)
    scripted_config.write_text(
        scripted_config.read_text().replace(
            'kind = "scripted"\nfixtures_dir = "fixtures"',
            'kind = "live"\nendpoint = "http://localhost:1/v1"\nmodel = "m"\n'
            'token_env = "TUNER_TEST_TOKEN"',
        )
    )

    assert tuner.main(["optimize", "--config", str(scripted_config)]) == tuner.EXIT_CONFIG


async def test_scripted_run_writes_a_self_describing_run_dir(scripted_config: Path) -> None:
    loaded = load_config(scripted_config)

    report = await cli.optimize(loaded)

    run_dir = scripted_config.parent / "runs" / "picker-seed3"
    assert report.status is RunStatus.COMPLETE
    assert [(entry.candidate_id, entry.score) for entry in report.ranking] == [("c0000", 0.5)]
    assert (run_dir / "config.snapshot").read_bytes() == scripted_config.read_bytes()
    assert (run_dir / "candidates" / "c0000.md").read_text().startswith("# Task\n")
    assert (run_dir / "step-000.checkpoint").is_file()

    ledger = UsageLedger.model_validate_json((run_dir / "ledger.json").read_bytes())
    assert ledger.requests == 2
    assert ledger.total_tokens == sum(r.input_tokens + r.output_tokens for r in ledger.records)
    assert json.loads((run_dir / "report.json").read_text())["ledger"] == json.loads(
        (run_dir / "ledger.json").read_text()
    )


def test_second_run_in_the_same_dir_is_refused(scripted_config: Path) -> None:
    assert tuner.main(["optimize", "--config", str(scripted_config)]) == tuner.EXIT_OK

    assert tuner.main(["optimize", "--config", str(scripted_config)]) == tuner.EXIT_CONFIG


def test_resume_of_a_finished_run(scripted_config: Path, caplog) -> None:
    assert tuner.main(["optimize", "--config", str(scripted_config)]) == tuner.EXIT_OK
    run_dir = scripted_config.parent / "runs" / "picker-seed3"

    with caplog.at_level(logging.INFO):
        assert tuner.main(["resume", str(run_dir)]) == tuner.EXIT_OK

    assert "already complete" in caplog.text


def test_report_on_a_run_without_steps(scripted_config: Path) -> None:
    assert tuner.main(["optimize", "--config", str(scripted_config)]) == tuner.EXIT_OK
    run_dir = scripted_config.parent / "runs" / "picker-seed3"

    assert tuner.main(["report", "actions", str(run_dir)]) == tuner.EXIT_RUN


def test_resume_without_checkpoint(tmp_path: Path) -> None:
    assert tuner.main(["resume", str(tmp_path)]) == tuner.EXIT_RUN


async def test_diff_report_against_the_parent(tmp_path: Path) -> None:
    text = SALIENT_PROMPT.read_text()
    start = text.index("# Performance Analysis")
    pruned = text[:start] + text[text.index("# Additional points") :]
    candidates = [
        CandidateRecord(
            id="c0000",
            tree=node_to_dict(parse_markdown(text).root),
            rendered=text,
            born_step=0,
            lineage=Lineage(),
        ),
        CandidateRecord(
            id="c0001",
            tree=node_to_dict(parse_markdown(pruned).root),
            rendered=pruned,
            born_step=1,
            lineage=Lineage(parent_id="c0000", step=1, origin=Origin.EXPANSION),
        ),
    ]
    await write_checkpoint(
        tmp_path,
        Checkpoint(
            config=SearchConfig(),
            step=1,
            status=RunStatus.RUNNING,
            candidates=candidates,
            steps=[StepRecord(step=1, selected=["c0000"], created=["c0001"])],
            rng_state=np.random.default_rng(0).bit_generator.state,
        ),
    )

    output = await cli.report_diff(tmp_path, "c0001", None)

    assert output.splitlines()[0] == "removed  Performance Analysis"
    saved = json.loads((tmp_path / "diff-c0000-c0001.json").read_text())
    assert saved["entries"] == [{"change": "removed", "path": "Performance Analysis"}]
