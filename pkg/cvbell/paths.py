"""Centralized output path helpers for cvbell runs."""

import os
import re
from pathlib import Path

OUT_DIR_ENV = "CVBELL_OUT_DIR"
DEFAULT_RUNS_DIR = Path("runs")
MANIFEST_NAME = "manifest.json"


def validate_stem(stem: str) -> None:
    """Validate that an output file stem is safe to join onto the run directory."""
    if not stem:
        raise ValueError("Output file stem cannot be empty")

    # Strict allowlist: alphanumeric, underscores, hyphens
    if not re.match(r"^[a-zA-Z0-9_-]+$", stem):
        raise ValueError(
            f"Output stem '{stem}' is invalid. Only alphanumeric characters, underscores, and hyphens are allowed."
        )


def resolve_out_dir(command: str, cli_out: str | None = None, config_out: str | None = None) -> Path:
    """Output directory by precedence: CLI flag, ``CVBELL_OUT_DIR``, config ``run.out``, ``runs/<command>``."""
    validate_stem(command)
    env_out = os.environ.get(OUT_DIR_ENV) or None
    for candidate in (cli_out, env_out, config_out):
        if candidate:
            return Path(candidate).expanduser()
    return DEFAULT_RUNS_DIR / command


def ensure_out_dir(out_dir: Path) -> Path:
    if out_dir.exists() and not out_dir.is_dir():
        raise ValueError(f"Output path {out_dir} exists and is not a directory")
    out_dir.mkdir(parents=True, exist_ok=True)
    return out_dir


def get_output_path(out_dir: Path, stem: str, suffix: str) -> Path:
    validate_stem(stem)
    if suffix not in (".json", ".csv"):
        raise ValueError(f"Unsupported output suffix '{suffix}'")
    return out_dir / f"{stem}{suffix}"


def get_manifest_path(out_dir: Path) -> Path:
    return out_dir / MANIFEST_NAME


def get_log_path(out_dir: Path) -> Path:
    return out_dir / "logs" / "structured.jsonl"
