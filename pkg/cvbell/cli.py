from __future__ import annotations

import argparse
import sys
import time
from collections.abc import Callable, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any

from .config import RunConfig, load_config
from .config_validation import ConfigError, validate_bundled_configs
from .experiment import TRIAL_COLUMNS, run_experiment, trial_rows
from .fock import FockTensor, NumericalError, apply_loss_all
from .inequalities import evaluate_all
from .logging_config import log_run_event, setup_logging
from .npt import pt_report, second_group
from .paths import ensure_out_dir, get_output_path, resolve_out_dir
from .reporting import (
    LOOPHOLE_COLUMNS,
    PT_COLUMNS,
    REPORT_COLUMNS,
    RunManifest,
    format_loophole_table,
    format_pt_table,
    format_report_table,
    loophole_row,
    pt_row,
    report_row,
    write_csv,
    write_json,
    write_manifest,
)
from .sampling import (
    CSV_COLUMNS,
    InsufficientSamplesError,
    SampleBatch,
    SamplingPlan,
    estimate_ingredients,
    quadrature_pdf,
    sample_all_settings,
    sample_counts,
    sample_quadrature,
    sampled_reports,
)
from .states import build

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_SAMPLES = 4

STATE_AXES = ("r", "theta", "phi", "p_s")
SWEEP_COLUMNS = ("axis", "value", *REPORT_COLUMNS)
SWEEP_LOOPHOLE_COLUMNS = ("axis", "value", *LOOPHOLE_COLUMNS)


@dataclass
class CommandContext:
    command: str
    config: RunConfig
    out_dir: Path
    outputs: list[Path] = field(default_factory=list)

    def output(self, stem: str, suffix: str) -> Path:
        path = get_output_path(self.out_dir, stem, suffix)
        self.outputs.append(path)
        return path


def _state_for(config: RunConfig, eta: float) -> FockTensor:
    state = build(config.state)
    if eta < 1.0:
        state = apply_loss_all(state, eta)
    return state


def eval_cmd(ctx: CommandContext) -> None:
    config = ctx.config
    state = _state_for(config, config.evaluate.eta)
    reports = evaluate_all(state, config.evaluate.families, config.evaluate.partitions)
    print(format_report_table(reports))

    write_json(ctx.output("reports", ".json"), [r.to_dict() for r in reports])
    write_csv(ctx.output("reports", ".csv"), REPORT_COLUMNS, (report_row(r) for r in reports))
    for r in reports:
        log_run_event("inequality_evaluated", family=r.family, k=r.k, ratio=r.ratio, violated=r.violated)


def npt_cmd(ctx: CommandContext) -> None:
    config = ctx.config
    state = _state_for(config, config.evaluate.eta)
    ks = config.evaluate.partitions or tuple(range(1, state.num_modes))
    reports = [pt_report(state, second_group(state.num_modes, k), config.evaluate.npt_method) for k in ks]
    print(format_pt_table(reports))

    write_json(ctx.output("npt", ".json"), [r.to_dict() for r in reports])
    write_csv(ctx.output("npt", ".csv"), PT_COLUMNS, (pt_row(r) for r in reports))


def _sample_rows(batches: Sequence[SampleBatch]) -> list[list[Any]]:
    rows: list[list[Any]] = []
    start = 0
    for batch in batches:
        rows.extend(batch.csv_rows(start))
        start += batch.trials
    return rows


def _moment_summary(batch: SampleBatch) -> dict[str, Any]:
    return {
        "trials": batch.trials,
        "mean": batch.outcomes.mean(axis=0).tolist(),
        "variance": batch.outcomes.var(axis=0, ddof=1).tolist() if batch.trials > 1 else None,
    }


def sample_cmd(ctx: CommandContext) -> None:
    config = ctx.config
    settings = config.sampling
    seed = config.run.seed
    state = build(config.state)

    if settings.measure == "settings":
        plan = SamplingPlan(
            trials=settings.trials,
            eta=settings.eta,
            grid_points=settings.grid_points,
            half_width=settings.half_width,
            seed=seed,
        )
        batches = sample_all_settings(state, plan)
        ingredients = estimate_ingredients(batches)
        reports = sampled_reports(ingredients, config.evaluate.families, settings.sigma_multiplier)
        print(format_report_table(reports))
        write_json(
            ctx.output("reports", ".json"),
            {
                "reports": [r.to_dict() for r in reports],
                "ingredients": {name: est.to_dict() for name, est in ingredients.items()},
            },
        )
        write_csv(ctx.output("reports", ".csv"), REPORT_COLUMNS, (report_row(r) for r in reports))
    else:
        if settings.measure == "homodyne":
            pdf = quadrature_pdf(state, settings.phases, settings.grid_points, settings.half_width)
            batches = [sample_quadrature(pdf, settings.trials, seed, (0,), settings.eta)]
        else:
            batches = [sample_counts(state, settings.eta, settings.trials, seed, (0,))]
        summary = _moment_summary(batches[0])
        print(f"\n{'Mode':<6} {'Mean':>14} {'Variance':>14}")
        print("=" * 36)
        variances = summary["variance"] or [float("nan")] * len(summary["mean"])
        for mode, (mean, variance) in enumerate(zip(summary["mean"], variances, strict=True), start=1):
            print(f"{mode:<6} {mean:>14.6g} {variance:>14.6g}")
        write_json(ctx.output("summary", ".json"), {"measure": settings.measure, **summary})

    write_csv(ctx.output("samples", ".csv"), CSV_COLUMNS, _sample_rows(batches))
    log_run_event("samples_written", trials=settings.trials, seed=seed)


def experiment_cmd(ctx: CommandContext) -> None:
    config = ctx.config
    if config.experiment is None:
        raise ConfigError("The experiment command needs an 'experiment' section")
    report, batches = run_experiment(config.experiment, workers=config.run.workers, keep_batches=config.record_trials)
    print(format_loophole_table(report))

    write_json(ctx.output("experiment", ".json"), report.to_dict())
    write_csv(ctx.output("experiment", ".csv"), LOOPHOLE_COLUMNS, [loophole_row(report)])
    if config.record_trials:
        write_csv(ctx.output("trials", ".csv"), TRIAL_COLUMNS, trial_rows(batches))


def sweep_point(config: RunConfig, value: float) -> list[list[Any]]:
    """Rows for one sweep value; ``p_d`` runs the experiment, every other axis is analytic."""
    sweep = config.sweep
    if sweep is None:
        raise ConfigError("The sweep command needs a 'sweep' section")
    axis = sweep.axis

    if axis == "p_d":
        if config.experiment is None:
            raise ConfigError("Sweeping p_d needs an 'experiment' section")
        report, _ = run_experiment(replace(config.experiment, p_d=value))
        return [[axis, value, *loophole_row(report)]]

    spec = config.state
    eta = config.evaluate.eta
    partitions = sweep.partitions
    if axis in STATE_AXES:
        spec = spec.with_params(**{axis: value})
    elif axis == "eta":
        eta = value
    elif axis == "k":
        partitions = (int(value),)

    state = build(spec)
    if eta < 1.0:
        state = apply_loss_all(state, eta)
    reports = evaluate_all(state, sweep.families, partitions)
    log_run_event("sweep_point", level="DEBUG", axis=axis, value=value)
    return [[axis, value, *report_row(r)] for r in reports]


def sweep_cmd(ctx: CommandContext) -> None:
    config = ctx.config
    sweep = config.sweep
    if sweep is None:
        raise ConfigError("The sweep command needs a 'sweep' section")

    with ThreadPoolExecutor(max_workers=max(config.run.workers, 1)) as pool:
        chunks = list(pool.map(lambda v: sweep_point(config, v), sweep.values))
    rows = [row for chunk in chunks for row in chunk]

    columns = SWEEP_LOOPHOLE_COLUMNS if sweep.axis == "p_d" else SWEEP_COLUMNS
    records = [dict(zip(columns, row, strict=True)) for row in rows]
    print(f"\n{'Axis':<6} {'Value':>10} {'Family':<8} {'k':>3} {'Ratio':>12} {'Violated':>9}")
    print("=" * 52)
    for record in records:
        if sweep.axis == "p_d":
            k, ratio = 1, float("nan")
            violated = record["violated_corrected"]
            if violated is None:
                violated = record["violated_naive"]
        else:
            k, ratio, violated = record["k"], record["ratio"], record["violated"]
        print(
            f"{record['axis']:<6} {record['value']:>10.4g} {record['family']:<8} {k:>3} "
            f"{ratio:>12.6g} {'yes' if violated else 'no':>9}"
        )

    write_csv(ctx.output("sweep", ".csv"), columns, rows)
    write_json(ctx.output("sweep", ".json"), records)


COMMANDS: dict[str, Callable[[CommandContext], None]] = {
    "eval": eval_cmd,
    "sample": sample_cmd,
    "sweep": sweep_cmd,
    "npt": npt_cmd,
    "experiment": experiment_cmd,
}


def run_command(command: str, config_path: Path, seed: int | None, out: str | None, workers: int | None) -> int:
    """Load the config, set up the run directory and logging, dispatch, and write the manifest."""
    started = time.monotonic()
    try:
        config = load_config(config_path).with_overrides(seed=seed, workers=workers, out=out)
        out_dir = ensure_out_dir(resolve_out_dir(command, out, config.run.out))
    except (ConfigError, ValueError) as exc:
        return _fail(command, exc, EXIT_CONFIG)

    setup_logging(out_dir, config.log_level, config.log_console)
    log_run_event("command_started", command=command, seed=config.run.seed, workers=config.run.workers)
    ctx = CommandContext(command, config, out_dir)
    try:
        COMMANDS[command](ctx)
    except InsufficientSamplesError as exc:
        return _fail(command, exc, EXIT_SAMPLES)
    except NumericalError as exc:
        return _fail(command, exc, EXIT_NUMERICAL)
    except (ConfigError, ValueError) as exc:
        return _fail(command, exc, EXIT_CONFIG)

    elapsed = time.monotonic() - started
    manifest = RunManifest(
        command=command,
        config_path=str(config_path),
        resolved=config.to_dict(),
        seed=config.run.seed,
        outputs=[p.name for p in ctx.outputs],
        wall_clock_s=round(elapsed, 3),
    )
    write_manifest(out_dir, manifest)
    log_run_event("command_finished", command=command, duration_ms=round(elapsed * 1000, 1))
    print(f"\nOutputs written to {out_dir}")
    return EXIT_OK


def _fail(command: str, exc: Exception, code: int) -> int:
    log_run_event("command_failed", level="ERROR", command=command, error=str(exc))
    print(f"Error: {exc}", file=sys.stderr)
    return code


def validate_cmd(config_path: Path | None) -> int:
    if config_path is not None:
        try:
            load_config(config_path)
        except ConfigError as exc:
            print(f"Error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        print(f"{config_path} is valid.")
        return EXIT_OK

    errors = validate_bundled_configs()
    if errors:
        print(f"Validation errors ({len(errors)}):")
        for err in errors:
            print(f" - {err}")
        return EXIT_CONFIG
    print("All bundled configs are valid.")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="Continuous-variable Bell inequality lab")
    subparsers = parser.add_subparsers(dest="command", required=True)

    helps = {
        "eval": "Evaluate both inequality families analytically",
        "sample": "Simulate measurements and export the sample batch",
        "sweep": "Evaluate over a list of parameter values",
        "npt": "Partial-transpose spectrum for every bipartition",
        "experiment": "Run the randomized-setting Bell test with detection loss",
    }
    for name, help_text in helps.items():
        sub = subparsers.add_parser(name, help=help_text)
        sub.add_argument("--config", required=True, type=Path, help="Run configuration (JSON)")
        sub.add_argument("--seed", type=int, help="Override run.seed")
        sub.add_argument("--out", help="Output directory (overrides CVBELL_OUT_DIR and run.out)")
        sub.add_argument("--workers", type=int, help="Worker threads for shards and sweep points")

    validate_parser = subparsers.add_parser("validate", help="Validate a config, or every bundled config")
    validate_parser.add_argument("--config", type=Path, help="Config to validate")

    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)

    if args.command == "validate":
        return validate_cmd(args.config)
    if args.command in COMMANDS:
        if args.workers is not None and args.workers < 1:
            parser.error(f"--workers must be >= 1, got {args.workers}")
        return run_command(args.command, args.config, args.seed, args.out, args.workers)
    parser.error(f"Unknown command {args.command}")  # pragma: no cover - parser enforces valid commands
    return EXIT_CONFIG  # pragma: no cover


if __name__ == "__main__":
    sys.exit(main())
