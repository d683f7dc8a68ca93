"""Validation helpers for cvbell run configurations."""

from __future__ import annotations

import json
from functools import cache
from importlib import resources
from pathlib import Path
from typing import Any, cast

from jsonschema import Draft7Validator, ValidationError


class ConfigError(ValueError):
    """Raised when a run configuration cannot be parsed or validated."""


def validate_run_config(config: dict[str, Any], context: str = "run_config") -> None:
    _validate_against_schema(config, "run_config_schema.json", context)


def load_config_file(config_path: Path) -> dict[str, Any]:
    try:
        raw_content = config_path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"Cannot read config {config_path}: {exc.strerror or exc}") from exc
    try:
        content = json.loads(raw_content)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"Invalid JSON in {config_path} at line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    if not isinstance(content, dict):
        raise ConfigError(f"{config_path}: top level must be an object")

    validate_run_config(cast(dict[str, Any], content), str(config_path))
    return cast(dict[str, Any], content)


def _validate_against_schema(instance: Any, schema_name: str, context: str) -> None:
    problems = sorted(_describe(error) for error in _schema_validator(schema_name).iter_errors(instance))
    if problems:
        raise ConfigError(f"{context}: " + "; ".join(problems))


@cache
def _schema_validator(schema_name: str) -> Draft7Validator:
    schema_text = resources.files(__package__).joinpath("schemas", schema_name).read_text(encoding="utf-8")
    return Draft7Validator(json.loads(schema_text))


def _describe(error: ValidationError) -> str:
    location = " -> ".join(str(part) for part in error.absolute_path) or "<root>"
    return f"{location}: {error.message}"


def validate_bundled_configs() -> list[str]:
    """Validate every example config shipped in ``cvbell/config``; returns error strings."""
    errors: list[str] = []
    config_dir = resources.files(__package__).joinpath("config")
    for entry in sorted(config_dir.iterdir(), key=lambda p: p.name):
        if not entry.name.endswith(".json"):
            continue
        with resources.as_file(entry) as path:
            try:
                load_config_file(path)
            except ConfigError as exc:
                errors.append(str(exc))
    return errors
