"""JSON / CSV emission, run manifests and aligned result tables.

CSV files start with a ``# manifest: manifest.json`` comment line followed by the
header; bodies contain no timestamps so identical runs give identical bytes.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field
from datetime import datetime
from datetime import timezone
from pathlib import Path
from typing import Any

import numpy as np

from . import __version__
from .experiment import LoopholeReport
from .inequalities import InequalityReport
from .npt import PTReport
from .paths import MANIFEST_NAME, get_manifest_path

UTC = timezone.utc

logger = logging.getLogger(__name__)

REPORT_COLUMNS = ("family", "N", "k", "lhs", "rhs", "ratio", "violated", "sigma", "source", "lhs_se", "rhs_se")
PT_COLUMNS = ("partition", "min_eig", "negativity", "is_npt", "method")
LOOPHOLE_COLUMNS = (
    "family",
    "lhs",
    "lhs_se",
    "naive_rhs",
    "naive_rhs_se",
    "corrected_rhs",
    "corrected_rhs_se",
    "violated_naive",
    "sigma_naive",
    "violated_corrected",
    "sigma_corrected",
    "p_d_observed_1",
    "p_d_observed_2",
)


def to_jsonable(value: Any) -> Any:
    """Recursively convert to JSON-safe values; non-finite floats become ``"inf"``/``"-inf"``/``"nan"``."""
    if isinstance(value, dict):
        return {str(k): to_jsonable(v) for k, v in value.items()}
    if isinstance(value, list | tuple):
        return [to_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return [to_jsonable(v) for v in value.tolist()]
    if isinstance(value, np.generic):
        value = value.item()
    if isinstance(value, float) and not math.isfinite(value):
        if math.isnan(value):
            return "nan"
        return "inf" if value > 0 else "-inf"
    if isinstance(value, Path):
        return str(value)
    return value


def write_json(path: Path, payload: Any) -> Path:
    path.write_text(json.dumps(to_jsonable(payload), indent=2) + "\n", encoding="utf-8")
    logger.debug("json_written", extra={"event": "json_written", "path": str(path)})
    return path


def write_csv(path: Path, columns: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
    with path.open("w", encoding="utf-8", newline="") as handle:
        handle.write(f"# manifest: {MANIFEST_NAME}\n")
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow(_csv_cell(v) for v in row)
    logger.debug("csv_written", extra={"event": "csv_written", "path": str(path)})
    return path


def read_csv_body(path: Path) -> list[list[str]]:
    """Header and rows of a CSV written by :func:`write_csv`, comment lines skipped."""
    with path.open("r", encoding="utf-8", newline="") as handle:
        lines = [line for line in handle if not line.startswith("#")]
    return list(csv.reader(lines))


def _csv_cell(value: Any) -> Any:
    if isinstance(value, np.generic):
        value = value.item()
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    return value


def report_row(report: InequalityReport) -> list[Any]:
    record = report.to_dict()
    return [
        record["family"],
        record["N"],
        record["k"],
        record["lhs"],
        record["rhs"],
        record["ratio"],
        record["violated"],
        record["sigma"],
        report.source,
        report.lhs_se,
        report.rhs_se,
    ]


def pt_row(report: PTReport) -> list[Any]:
    return [" ".join(str(m) for m in report.partition), report.min_eig, report.negativity, report.is_npt, report.method]


def loophole_row(report: LoopholeReport) -> list[Any]:
    corrected = report.corrected
    return [
        report.family,
        report.naive.lhs,
        report.naive.lhs_se,
        report.naive.rhs,
        report.naive.rhs_se,
        None if corrected is None else corrected.rhs,
        None if corrected is None else corrected.rhs_se,
        report.naive.violated,
        report.naive.sigma,
        None if corrected is None else corrected.violated,
        None if corrected is None else corrected.sigma,
        report.p_d_observed[0],
        report.p_d_observed[1],
    ]


@dataclass
class RunManifest:
    command: str
    config_path: str | None
    resolved: dict[str, Any]
    seed: int
    outputs: list[str] = field(default_factory=list)
    version: str = __version__
    started_at: str = field(default_factory=lambda: datetime.now(UTC).isoformat())
    wall_clock_s: float | None = None

    def to_dict(self) -> dict[str, Any]:
        return {
            "command": self.command,
            "config_path": self.config_path,
            "resolved": self.resolved,
            "seed": self.seed,
            "outputs": list(self.outputs),
            "version": self.version,
            "started_at": self.started_at,
            "wall_clock_s": self.wall_clock_s,
        }


def write_manifest(out_dir: Path, manifest: RunManifest) -> Path:
    return write_json(get_manifest_path(out_dir), manifest.to_dict())


def _fmt(value: float | None, width: int = 12) -> str:
    if value is None:
        return f"{'-':>{width}}"
    if isinstance(value, float) and not math.isfinite(value):
        return f"{str(value):>{width}}"
    return f"{value:>{width}.6g}"


def format_report_table(reports: Sequence[InequalityReport]) -> str:
    lines = [
        f"\n{'Family':<8} {'N':>3} {'k':>3} {'LHS':>12} {'RHS':>12} {'Ratio':>12} "
        f"{'Violated':>9} {'Sigma':>8} {'Source':<8}",
        "=" * 80,
    ]
    for r in reports:
        lines.append(
            f"{r.family:<8} {r.n_modes:>3} {r.k:>3} {_fmt(r.lhs)} {_fmt(r.rhs)} {_fmt(r.ratio)} "
            f"{'yes' if r.violated else 'no':>9} {_fmt(r.sigma, 8)} {r.source:<8}"
        )
    return "\n".join(lines)


def format_pt_table(reports: Sequence[PTReport]) -> str:
    lines = [f"\n{'Partition':<12} {'Min eig':>14} {'Negativity':>12} {'NPT':>5} {'Method':<8}", "=" * 55]
    for r in reports:
        partition = ",".join(str(m) for m in r.partition)
        lines.append(
            f"{partition:<12} {_fmt(r.min_eig, 14)} {_fmt(r.negativity)} {'yes' if r.is_npt else 'no':>5} {r.method:<8}"
        )
    return "\n".join(lines)


def format_loophole_table(report: LoopholeReport) -> str:
    corrected = report.corrected
    lines = [f"\nSimulated Bell test ({report.family} family, {report.trials} trials)", "=" * 60]
    lines.append(f"{'LHS':<22} {_fmt(report.naive.lhs)} +/- {_fmt(report.naive.lhs_se)}")
    lines.append(f"{'Naive RHS':<22} {_fmt(report.naive.rhs)} +/- {_fmt(report.naive.rhs_se)}")
    if corrected is not None:
        lines.append(f"{'Corrected RHS':<22} {_fmt(corrected.rhs)} +/- {_fmt(corrected.rhs_se)}")
    naive_verdict = "yes" if report.naive.violated else "no"
    lines.append(f"{'Violated (naive)':<22} {naive_verdict:>12} at {_fmt(report.naive.sigma, 8)} sigma")
    if corrected is not None:
        verdict = "yes" if corrected.violated else "no"
        lines.append(f"{'Violated (corrected)':<22} {verdict:>12} at {_fmt(corrected.sigma, 8)} sigma")
    lines.append(f"{'Observed p_D':<22} {_fmt(report.p_d_observed[0])} {_fmt(report.p_d_observed[1])}")
    if report.note:
        lines.append(f"Note: {report.note}")
    return "\n".join(lines)
