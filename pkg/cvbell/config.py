"""Run configuration: JSON document -> typed settings.

Angles may be numbers (radians) or literals such as ``"pi/4"``, ``"3pi/8"``,
``"-pi/2"`` and ``"0.25*pi"``. Complex coefficients may be numbers or ``[re, im]``.
"""

from __future__ import annotations

import math
import re
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any, Literal

from .config_validation import ConfigError, load_config_file, validate_run_config
from .experiment import ExperimentConfig
from .inequalities import FAMILIES, Family
from .sampling import DEFAULT_GRID_POINTS, DEFAULT_HALF_WIDTH
from .states import StateSpec

_ANGLE = re.compile(r"^(?P<sign>[+-]?)(?P<coef>\d+(?:\.\d*)?|\.\d+)?\*?pi(?:/(?P<den>\d+(?:\.\d*)?))?$")

ANGLE_FIELDS = ("theta", "phi")
SWEEP_AXES = ("r", "theta", "phi", "p_s", "eta", "p_d", "k")

Measure = Literal["settings", "homodyne", "count"]


def parse_angle(value: Any) -> float:
    if isinstance(value, bool):
        raise ConfigError(f"Cannot parse angle {value!r}")
    if isinstance(value, int | float):
        return float(value)
    if isinstance(value, str):
        text = value.replace(" ", "").lower()
        match = _ANGLE.match(text)
        if match:
            coef = float(match["coef"]) if match["coef"] else 1.0
            den = float(match["den"]) if match["den"] else 1.0
            if den == 0.0:
                raise ConfigError(f"Angle {value!r} divides by zero")
            sign = -1.0 if match["sign"] == "-" else 1.0
            return sign * coef * math.pi / den
        try:
            return float(text)
        except ValueError:
            pass
    raise ConfigError(f"Cannot parse angle {value!r}")


def parse_complex(value: Any) -> complex:
    if isinstance(value, list | tuple) and len(value) == 2:
        return complex(float(value[0]), float(value[1]))
    if isinstance(value, int | float) and not isinstance(value, bool):
        return complex(value)
    raise ConfigError(f"Cannot parse complex coefficient {value!r}; use a number or [re, im]")


def state_from_dict(data: dict[str, Any]) -> StateSpec:
    normalized = dict(data)
    for name in ANGLE_FIELDS:
        if name in normalized:
            normalized[name] = parse_angle(normalized[name])
    for name in ("c1", "c2"):
        if name in normalized:
            normalized[name] = parse_complex(normalized[name])
    if "occupations" in normalized:
        normalized["occupations"] = tuple(normalized["occupations"])
    try:
        return StateSpec.from_dict(normalized)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"state: {exc}") from exc


@dataclass(frozen=True)
class EvaluateSettings:
    families: tuple[Family, ...] = FAMILIES
    partitions: tuple[int, ...] | None = None
    eta: float = 1.0
    npt_method: Literal["auto", "schmidt", "dense"] = "auto"


@dataclass(frozen=True)
class SamplingSettings:
    measure: Measure = "settings"
    phases: tuple[float, ...] = (0.0, 0.0)
    trials: int = 100_000
    eta: float = 1.0
    grid_points: int = DEFAULT_GRID_POINTS
    half_width: float = DEFAULT_HALF_WIDTH
    sigma_multiplier: float = 3.0


@dataclass(frozen=True)
class SweepSettings:
    axis: str
    values: tuple[float, ...]
    families: tuple[Family, ...] = FAMILIES
    partitions: tuple[int, ...] | None = None


@dataclass(frozen=True)
class RunSettings:
    seed: int = 0
    workers: int = 1
    out: str | None = None


@dataclass(frozen=True)
class RunConfig:
    state: StateSpec
    evaluate: EvaluateSettings = field(default_factory=EvaluateSettings)
    sampling: SamplingSettings = field(default_factory=SamplingSettings)
    experiment: ExperimentConfig | None = None
    sweep: SweepSettings | None = None
    run: RunSettings = field(default_factory=RunSettings)
    log_level: str = "INFO"
    log_console: bool = False
    record_trials: bool = False
    source: Path | None = None

    def with_overrides(self, seed: int | None = None, workers: int | None = None, out: str | None = None) -> RunConfig:
        """Apply CLI flags on top of the config's ``run`` section."""
        run = replace(
            self.run,
            seed=self.run.seed if seed is None else seed,
            workers=self.run.workers if workers is None else workers,
            out=self.run.out if out is None else out,
        )
        experiment = self.experiment
        if experiment is not None and seed is not None:
            experiment = replace(experiment, seed=seed)
        return replace(self, run=run, experiment=experiment)

    def to_dict(self) -> dict[str, Any]:
        return {
            "state": self.state.to_dict(),
            "evaluate": _plain(asdict(self.evaluate)),
            "sampling": _plain(asdict(self.sampling)),
            "experiment": None if self.experiment is None else self.experiment.to_dict(),
            "sweep": None if self.sweep is None else _plain(asdict(self.sweep)),
            "run": asdict(self.run),
            "logging": {"level": self.log_level, "console": self.log_console},
            "record_trials": self.record_trials,
        }


def _plain(data: dict[str, Any]) -> dict[str, Any]:
    return {key: list(value) if isinstance(value, tuple) else value for key, value in data.items()}


def _sweep_value(axis: str, raw: Any) -> float:
    if axis in ANGLE_FIELDS:
        return parse_angle(raw)
    if isinstance(raw, str):
        raise ConfigError(f"sweep: axis '{axis}' takes numeric values, got {raw!r}")
    if axis == "k":
        if float(raw) != int(raw):
            raise ConfigError(f"sweep: axis 'k' takes integers, got {raw!r}")
        return int(raw)
    return float(raw)


def _families(raw: Any) -> tuple[Family, ...]:
    return tuple(raw) if raw is not None else FAMILIES


def _partitions(raw: Any) -> tuple[int, ...] | None:
    return tuple(int(k) for k in raw) if raw is not None else None


def config_from_dict(data: dict[str, Any], source: Path | None = None) -> RunConfig:
    """Build a :class:`RunConfig` from an already schema-validated document."""
    state = state_from_dict(data["state"])
    run_data = data.get("run", {})
    run = RunSettings(
        seed=run_data.get("seed", 0),
        workers=run_data.get("workers", 1),
        out=run_data.get("out"),
    )

    eval_data = data.get("evaluate", {})
    evaluate = EvaluateSettings(
        families=_families(eval_data.get("families")),
        partitions=_partitions(eval_data.get("partitions")),
        eta=eval_data.get("eta", 1.0),
        npt_method=eval_data.get("npt_method", "auto"),
    )

    sampling_data = data.get("sampling", {})
    sampling = SamplingSettings(
        measure=sampling_data.get("measure", "settings"),
        phases=tuple(parse_angle(p) for p in sampling_data.get("phases", [0.0] * min(state.num_modes, 2))),
        trials=sampling_data.get("trials", SamplingSettings.trials),
        eta=sampling_data.get("eta", 1.0),
        grid_points=sampling_data.get("grid_points", DEFAULT_GRID_POINTS),
        half_width=sampling_data.get("half_width", DEFAULT_HALF_WIDTH),
        sigma_multiplier=sampling_data.get("sigma_multiplier", SamplingSettings.sigma_multiplier),
    )

    experiment = None
    record_trials = False
    if "experiment" in data:
        exp_data = dict(data["experiment"])
        record_trials = bool(exp_data.pop("record_trials", False))
        if "setting_probs" in exp_data:
            exp_data["setting_probs"] = tuple(tuple(side) for side in exp_data["setting_probs"])
        try:
            experiment = ExperimentConfig(state=state, seed=run.seed, **exp_data)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"experiment: {exc}") from exc

    sweep = None
    if "sweep" in data:
        sweep_data = data["sweep"]
        axis = sweep_data["axis"]
        if axis not in SWEEP_AXES:
            raise ConfigError(f"sweep: unknown axis '{axis}'; expected one of {', '.join(SWEEP_AXES)}")
        sweep = SweepSettings(
            axis=axis,
            values=tuple(_sweep_value(axis, v) for v in sweep_data["values"]),
            families=_families(sweep_data.get("families")),
            partitions=_partitions(sweep_data.get("partitions")),
        )

    log_data = data.get("logging", {})
    return RunConfig(
        state=state,
        evaluate=evaluate,
        sampling=sampling,
        experiment=experiment,
        sweep=sweep,
        run=run,
        log_level=log_data.get("level", "INFO"),
        log_console=log_data.get("console", False),
        record_trials=record_trials,
        source=source,
    )


def load_config(path: Path) -> RunConfig:
    return config_from_dict(load_config_file(path), source=path)


def parse_config(data: dict[str, Any]) -> RunConfig:
    """Validate and build a config held in memory."""
    validate_run_config(data)
    return config_from_dict(data)
