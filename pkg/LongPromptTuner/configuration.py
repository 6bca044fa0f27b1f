from __future__ import annotations

import logging
import os
import tomllib
from pathlib import Path
from typing import Any, Literal

import attrs
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from evaluation.datasets import DatasetPaths
from evaluation.models import TaskSpec
from harness.errors import ConfigError
from llm.models import Tag
from search.models import SearchConfig

_logger = logging.getLogger(f"tuner.{__name__}")

_CONFIG_LOCAL = "config.local.toml"


class BackendProfile(BaseModel):
    """Where generations come from.

    A live profile names the environment variable holding its token; the token itself never
    appears in a config file or a run directory.
    """

    model_config = ConfigDict(extra="forbid")

    kind: Literal["live", "scripted"]
    endpoint: str | None = None
    model: str | None = None
    token_env: str | None = None
    extra_payload: dict[str, Any] = {}
    timeout: float = Field(default=300, gt=0)
    fixtures_dir: Path | None = None
    parallelism: int = Field(default=4, gt=0)
    retry_attempts: int = Field(default=3, gt=0)
    retry_wait: float = Field(default=1.0, ge=0)
    generation_temperature: float = Field(default=0.5, ge=0.0, le=1.0)

    @model_validator(mode="after")
    def _check_kind(self) -> BackendProfile:
        if self.kind == "live":
            missing = [key for key in ("endpoint", "model", "token_env") if not getattr(self, key)]
            if missing:
                raise ValueError(f"A live backend needs {', '.join(missing)}")
        elif self.fixtures_dir is None:
            raise ValueError("A scripted backend needs fixtures_dir")
        return self

    def token(self) -> str:
        """:raises ConfigError: The token variable is not set"""
        token = os.getenv(self.token_env or "")
        if not token:
            raise ConfigError(f"Environment variable {self.token_env} holds no backend token")
        return token


class LedgerSection(BaseModel):
    model_config = ConfigDict(extra="forbid")

    max_total_tokens: int | None = Field(default=None, gt=0)
    input_price_per_mtok: float = Field(default=0.0, ge=0.0)
    output_price_per_mtok: float = Field(default=0.0, ge=0.0)


class LimitsSection(BaseModel):
    model_config = ConfigDict(extra="forbid")

    max_output: dict[Tag, int] = {}


class RunSection(BaseModel):
    model_config = ConfigDict(extra="forbid")

    initial_prompt: Path
    output_dir: Path
    seed: int = 0


class LoggingSection(BaseModel):
    model_config = ConfigDict(extra="forbid")

    LOG_LEVEL: Literal["DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"] = "INFO"


class RunConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", populate_by_name=True)

    task: TaskSpec
    datasets: DatasetPaths
    search: SearchConfig = SearchConfig()
    backend: BackendProfile
    ledger: LedgerSection = LedgerSection()
    limits: LimitsSection = LimitsSection()
    run: RunSection
    log: LoggingSection = Field(default=LoggingSection(), alias="logging")

    @property
    def search_config(self) -> SearchConfig:
        """The search settings, seeded from the run section."""
        return self.search.model_copy(update={"seed": self.run.seed})

    def resolved(self, base_dir: Path) -> RunConfig:
        """Copy with every relative path made absolute against `base_dir`."""

        def resolve(path: Path) -> Path:
            return path if path.is_absolute() else base_dir / path

        backend = self.backend
        if backend.fixtures_dir is not None:
            backend = backend.model_copy(update={"fixtures_dir": resolve(backend.fixtures_dir)})
        run = self.run.model_copy(
            update={
                "initial_prompt": resolve(self.run.initial_prompt),
                "output_dir": resolve(self.run.output_dir),
            }
        )
        return self.model_copy(
            update={"datasets": self.datasets.resolved(base_dir), "backend": backend, "run": run}
        )


@attrs.define(frozen=True)
class LoadedConfig:
    """A validated run configuration with the file it came from."""

    config: RunConfig
    path: Path
    raw: bytes


def get_config_path(path: Path) -> Path:
    """Get the path to the relevant configuration file.

    To make local development easier, a committed configuration file can be overridden
    by a `config.local.toml` in the same directory: if that file is present, it is used
    instead. The files are not merged, so the local file needs every key.

    :param path: The configuration file given on the command line
    :return: The local override if there is one, `path` otherwise
    """
    local_config = path.parent / _CONFIG_LOCAL
    if local_config.is_file() and local_config != path:
        _logger.info("Using the local override %s instead of %s", local_config, path)
        return local_config
    return path


def load_config(path: Path) -> LoadedConfig:
    """Read and validate a run configuration.

    Relative paths in the file are resolved against the directory of the file.

    :raises ConfigError: The file is missing, is not TOML, or does not validate
    """
    config_path = get_config_path(path).resolve()
    try:
        raw = config_path.read_bytes()
    except OSError as e:
        raise ConfigError(f"Cannot read the config file at '{config_path}': {e}") from e
    return parse_config(raw, config_path)


def parse_config(raw: bytes, config_path: Path) -> LoadedConfig:
    """Validate configuration bytes as if they were read from `config_path`.

    :raises ConfigError: The bytes are not TOML or do not validate
    """
    try:
        config = RunConfig.model_validate(tomllib.loads(raw.decode("UTF-8")))
    except (tomllib.TOMLDecodeError, UnicodeDecodeError) as e:
        raise ConfigError(f"'{config_path}' is not valid TOML: {e}") from e
    except ValidationError as e:
        raise ConfigError(f"Invalid configuration in '{config_path}':\n{e}") from e

    return LoadedConfig(config=config.resolved(config_path.parent), path=config_path, raw=raw)
