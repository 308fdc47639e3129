"""Run configuration: TOML file plus CLI overrides, flags winning."""

from __future__ import annotations

import sys
from dataclasses import dataclass, field
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .cleaning import CleanConfig
from .classify import RemoteModelConfig

ALL_STAGES = (
    "ingest",
    "comments",
    "clean",
    "graph",
    "patterns",
    "exif",
    "classify",
    "report",
)


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    corpus_dir: Path
    output_dir: Path
    stages: set[str] = field(default_factory=lambda: set(ALL_STAGES))
    backend: str = "baseline"
    clean: CleanConfig = field(default_factory=CleanConfig)
    remote: RemoteModelConfig = field(default_factory=RemoteModelConfig)
    parallelism: int = 4
    token_min_len: int = 20
    token_min_entropy: float = 3.5
    rules_file: Path | None = None
    suppression_file: Path | None = None
    severity_map_file: Path | None = None
    fail_on: str | None = None
    keep_images: bool = True

    def __post_init__(self) -> None:
        self.corpus_dir = Path(self.corpus_dir)
        self.output_dir = Path(self.output_dir)
        if self.corpus_dir.resolve() == self.output_dir.resolve():
            raise ConfigError("output dir must differ from corpus dir")
        if self.parallelism < 1:
            raise ConfigError("parallelism must be >= 1")
        unknown = self.stages - set(ALL_STAGES)
        if unknown:
            raise ConfigError(f"unknown stages: {sorted(unknown)}")


def _merge(defaults: dict, file_values: dict, flag_values: dict) -> dict:
    merged = dict(defaults)
    merged.update({k: v for k, v in file_values.items() if v is not None})
    merged.update({k: v for k, v in flag_values.items() if v is not None})
    return merged


def load_config(
    corpus_dir: Path | str,
    output_dir: Path | str,
    config_file: Path | str | None = None,
    **flag_overrides,
) -> RunConfig:
    """Build a RunConfig with precedence flags > file > defaults."""
    file_values: dict = {}
    clean_values: dict = {}
    remote_values: dict = {}
    if config_file is not None:
        with open(config_file, "rb") as fh:
            try:
                data = tomllib.load(fh)
            except tomllib.TOMLDecodeError as exc:
                raise ConfigError(f"{config_file}: {exc}") from exc
        clean_values = data.pop("clean", {})
        remote_values = data.pop("remote", {})
        file_values = data

    flag_clean = flag_overrides.pop("clean", {}) or {}
    flag_remote = flag_overrides.pop("remote", {}) or {}

    values = _merge({}, file_values, flag_overrides)
    if "stages" in values and not isinstance(values["stages"], set):
        values["stages"] = set(values["stages"])
    for key in ("rules_file", "suppression_file", "severity_map_file"):
        if values.get(key) is not None:
            values[key] = Path(values[key])

    clean = CleanConfig(**_merge({}, clean_values, flag_clean))
    remote = RemoteModelConfig(**_merge({}, remote_values, flag_remote))
    return RunConfig(
        corpus_dir=Path(corpus_dir),
        output_dir=Path(output_dir),
        clean=clean,
        remote=remote,
        **values,
    )
