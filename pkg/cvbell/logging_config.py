"""JSON-lines logging for cvbell runs.

Every command writes ``<out>/logs/structured.jsonl``. Records carry ``timestamp``,
``level``, ``logger``, ``event`` and whichever whitelisted extras the call site
attached; anything else passed through ``extra`` is dropped.
"""

from __future__ import annotations

import json
import logging
import math
from collections.abc import Iterable, Mapping
from datetime import datetime
from datetime import timezone
from pathlib import Path
from typing import Any

from .paths import get_log_path

UTC = timezone.utc

ROOT_LOGGER = "cvbell"
RUN_LOGGER = "cvbell.run"

RUN_FIELDS: tuple[str, ...] = (
    "command",
    "family",
    "k",
    "variant",
    "cutoff",
    "tail",
    "dimension",
    "eta",
    "p_d",
    "trials",
    "shard",
    "cell",
    "axis",
    "value",
    "workers",
    "duration_ms",
    "path",
    "error",
    "seed",
    "ratio",
    "violated",
    "min_eig",
)


def _field_value(value: Any) -> Any:
    if getattr(value, "ndim", None) == 0:
        value = value.item()
    if isinstance(value, float) and not math.isfinite(value):
        if math.isnan(value):
            return "nan"
        return "inf" if value > 0 else "-inf"
    return value


class StructuredFormatter(logging.Formatter):
    """Render a record as one JSON object keyed by event name."""

    def __init__(self, fields: Iterable[str] = RUN_FIELDS) -> None:
        super().__init__()
        self.fields = tuple(fields)

    def format(self, record: logging.LogRecord) -> str:
        event = getattr(record, "event", None)
        message = record.getMessage()
        payload: dict[str, Any] = {
            "timestamp": datetime.fromtimestamp(record.created, UTC).isoformat(),
            "level": record.levelname,
            "logger": record.name,
        }
        if event:
            payload["event"] = event
        if message and message != event:
            payload["message"] = message
        payload.update({key: _field_value(getattr(record, key)) for key in self.fields if hasattr(record, key)})
        if record.exc_info:
            payload["exception"] = self.formatException(record.exc_info)
        return json.dumps(payload, default=str)


def setup_logging(
    out_dir: Path,
    level: str = "INFO",
    console_output: bool = False,
    module_levels: Mapping[str, str] | None = None,
) -> Path:
    """Send the ``cvbell`` logger tree to the run's structured log.

    Handlers from a previous run in the same process are closed and replaced.
    ``module_levels`` maps a submodule name (``"states"``) to its own level.
    """
    log_path = get_log_path(out_dir)
    log_path.parent.mkdir(parents=True, exist_ok=True)

    root = logging.getLogger(ROOT_LOGGER)
    for handler in root.handlers:
        handler.close()
    root.handlers.clear()
    root.setLevel(level.upper())

    handlers: list[logging.Handler] = [logging.FileHandler(log_path, encoding="utf-8")]
    if console_output:
        handlers.append(logging.StreamHandler())
    for handler in handlers:
        handler.setFormatter(StructuredFormatter())
        root.addHandler(handler)

    for module_name, module_level in (module_levels or {}).items():
        logging.getLogger(f"{ROOT_LOGGER}.{module_name}").setLevel(module_level.upper())

    return log_path


def log_run_event(event: str, level: str = "INFO", **fields: Any) -> None:
    """Log a run-level event; ``fields`` outside the whitelist are not written."""
    logging.getLogger(RUN_LOGGER).log(logging.getLevelName(level.upper()), event, extra={"event": event, **fields})
