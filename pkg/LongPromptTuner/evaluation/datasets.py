"""Labelled datasets stored as JSON lines: one ``{"id", "input", "label"}`` object per line."""

from __future__ import annotations

import logging
from pathlib import Path

from pydantic import BaseModel, ConfigDict, ValidationError

from evaluation.errors import DatasetInvalid, DatasetNotFound
from evaluation.models import ExampleRecord, Split, TaskSpec

_logger = logging.getLogger(f"tuner.{__name__}")

REQUIRED_SPLITS = (Split.TRAIN, Split.VAL)


class DatasetPaths(BaseModel):
    """Files per split, given directly or through a JSON manifest ``{"Train": [...], ...}``."""

    model_config = ConfigDict(extra="forbid")

    train: list[Path] = []
    val: list[Path] = []
    test: list[Path] = []
    manifest: Path | None = None

    def resolved(self, base_dir: Path) -> DatasetPaths:
        def resolve(path: Path) -> Path:
            return path if path.is_absolute() else base_dir / path

        return DatasetPaths(
            train=[resolve(path) for path in self.train],
            val=[resolve(path) for path in self.val],
            test=[resolve(path) for path in self.test],
            manifest=resolve(self.manifest) if self.manifest is not None else None,
        )


class DatasetManifest(BaseModel):
    model_config = ConfigDict(extra="forbid")

    Train: list[Path] = []
    Val: list[Path] = []
    Test: list[Path] = []


def files_per_split(paths: DatasetPaths) -> dict[Split, list[Path]]:
    files = {
        Split.TRAIN: list(paths.train),
        Split.VAL: list(paths.val),
        Split.TEST: list(paths.test),
    }
    if paths.manifest is None:
        return files

    if not paths.manifest.is_file():
        raise DatasetNotFound(f"Dataset manifest {paths.manifest} does not exist")
    try:
        manifest = DatasetManifest.model_validate_json(paths.manifest.read_bytes())
    except ValidationError as e:
        raise DatasetInvalid(f"Dataset manifest {paths.manifest} is invalid: {e}") from e

    base_dir = paths.manifest.parent
    listed_per_split = {
        Split.TRAIN: manifest.Train,
        Split.VAL: manifest.Val,
        Split.TEST: manifest.Test,
    }
    for split, listed in listed_per_split.items():
        files[split] += [path if path.is_absolute() else base_dir / path for path in listed]
    return files


def read_records(path: Path, split: Split, task: TaskSpec) -> list[ExampleRecord]:
    """Read and check one JSON lines file.

    :raises DatasetNotFound: The file does not exist
    :raises DatasetInvalid: A line does not parse or its label is outside the label set
    """
    if not path.is_file():
        raise DatasetNotFound(f"Dataset file {path} does not exist")

    records = []
    labels = set(task.label_set)
    for line_number, line in enumerate(path.read_text(encoding="UTF-8").splitlines(), start=1):
        if not line.strip():
            continue
        try:
            record = ExampleRecord.model_validate_json(line)
        except ValidationError as e:
            raise DatasetInvalid(f"{path}:{line_number}: {e}") from e

        if isinstance(record.gold, frozenset) != task.metric.is_multi_label:
            expected = "a list of labels" if task.metric.is_multi_label else "a single label"
            raise DatasetInvalid(f"{path}:{line_number}: expected {expected}")
        if unknown := record.gold_labels - labels:
            raise DatasetInvalid(f"{path}:{line_number}: unknown labels {sorted(unknown)}")
        records.append(record.model_copy(update={"split": split}))
    return records


def load_datasets(paths: DatasetPaths, task: TaskSpec) -> dict[Split, list[ExampleRecord]]:
    """Load every split and check ids are unique across the whole dataset.

    :param paths: Absolute file paths per split (see `DatasetPaths.resolved`)
    :param task: Task whose label set the records must fit
    :return: Records per split, in file order
    :raises DatasetNotFound: A listed file is missing
    :raises DatasetInvalid: Bad records, duplicate ids, or an empty train or validation split
    """
    datasets: dict[Split, list[ExampleRecord]] = {}
    seen_ids: dict[str, Path] = {}
    for split, files in files_per_split(paths).items():
        datasets[split] = []
        for path in files:
            for record in read_records(path, split, task):
                if record.id in seen_ids:
                    raise DatasetInvalid(
                        f"Record id {record.id!r} appears in {seen_ids[record.id]} and {path}"
                    )
                seen_ids[record.id] = path
                datasets[split].append(record)

    for split in REQUIRED_SPLITS:
        if not datasets[split]:
            raise DatasetInvalid(f"The {split} split has no records")

    _logger.info(
        "Loaded %s",
        ", ".join(f"{len(records)} {split} records" for split, records in datasets.items()),
    )
    return datasets
