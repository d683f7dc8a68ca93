"""Simulated two-observer Bell test with randomized settings and detection loss.

Each trial, observer j draws ``R_j`` in {0, 1, 2}: homodyne X, homodyne Y or
photon counting. Counting misses with probability ``1 - p_d`` and an undetected
event is recorded as 0. Trials run in shards, each on its own random streams;
shard results are merged in shard order so the outcome does not depend on
scheduling.
"""

from __future__ import annotations

import logging
import math
import time
from collections.abc import Iterable, Iterator
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Any, Literal

import numpy as np

from . import rng
from .fock import FockTensor
from .inequalities import DEFAULT_SIGMA_MULTIPLIER, Family, InequalityReport, sampled_report
from .logging_config import log_run_event
from .sampling import (
    CORRELATOR_CELLS,
    CSV_COLUMNS,
    DEFAULT_GRID_POINTS,
    DEFAULT_HALF_WIDTH,
    SETTING_COUNT,
    SETTING_LABELS,
    Estimate,
    GridPdf,
    InsufficientSamplesError,
    RunningMoments,
    SampleBatch,
    accumulate,
    attenuate_quadratures,
    cell_ingredients,
    draw_counts,
    draw_quadrature,
    finalize,
    lhs_estimate,
    merge_moments,
    partition_trials,
    quadrature_pdf,
    rhs_estimate,
)
from .states import StateSpec, build

logger = logging.getLogger(__name__)

UNIFORM_SETTINGS = (1 / 3, 1 / 3, 1 / 3)
TRIAL_COLUMNS = (*CSV_COLUMNS, "r_1", "r_2")
FIRST_FAMILY_NOTE = "full-LHV bound with undetected events is defined for the second family only; naive bound reported"


@dataclass(frozen=True)
class ExperimentConfig:
    state: StateSpec
    family: Family = "second"
    eta: float = 1.0
    p_d: float = 1.0
    setting_probs: tuple[tuple[float, float, float], tuple[float, float, float]] = (UNIFORM_SETTINGS, UNIFORM_SETTINGS)
    trials: int = 100_000
    seed: int = 0
    shard_size: int = 100_000
    min_cell_trials: int = 100
    sigma_multiplier: float = DEFAULT_SIGMA_MULTIPLIER
    grid_points: int = DEFAULT_GRID_POINTS
    half_width: float = DEFAULT_HALF_WIDTH
    undetected_policy: Literal["assign_zero"] = "assign_zero"

    def __post_init__(self) -> None:
        if self.family not in ("first", "second"):
            raise ValueError(f"Unknown inequality family {self.family!r}")
        if self.state.num_modes != 2:
            raise ValueError(f"The experiment needs a 2-mode state, got {self.state.num_modes} modes")
        for name in ("eta", "p_d"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {value}")
        probs = tuple(tuple(float(p) for p in side) for side in self.setting_probs)
        if len(probs) != 2 or any(len(side) != 3 for side in probs):
            raise ValueError("setting_probs needs three probabilities (X, Y, count) for each of the two observers")
        for side in probs:
            if any(p < 0 for p in side) or abs(sum(side) - 1.0) > 1e-9:
                raise ValueError(f"Setting probabilities must be non-negative and sum to 1, got {list(side)}")
        object.__setattr__(self, "setting_probs", probs)
        if self.trials < 1:
            raise ValueError(f"trials must be >= 1, got {self.trials}")
        if self.shard_size < 1:
            raise ValueError(f"shard_size must be >= 1, got {self.shard_size}")
        if self.min_cell_trials < 2:
            raise ValueError(f"min_cell_trials must be >= 2, got {self.min_cell_trials}")
        if self.undetected_policy != "assign_zero":
            raise ValueError(f"Unsupported undetected policy {self.undetected_policy!r}")

    def to_dict(self) -> dict[str, Any]:
        data = asdict(self)
        data["state"] = self.state.to_dict()
        data["setting_probs"] = [list(side) for side in self.setting_probs]
        return data


@dataclass(frozen=True)
class LoopholeReport:
    """Sampled verdicts against the naive and the detection-corrected bounds."""

    family: Family
    naive: InequalityReport
    corrected: InequalityReport | None
    p_d_observed: tuple[float, float]
    detected_means: tuple[float, float]
    settings_histogram: tuple[tuple[int, int, int], ...]
    trials: int
    ingredients: dict[str, Estimate] = field(default_factory=dict)
    note: str | None = None

    @property
    def lhs(self) -> float:
        return self.naive.lhs

    @property
    def violated_naive(self) -> bool:
        return self.naive.violated

    @property
    def violated_corrected(self) -> bool | None:
        return None if self.corrected is None else self.corrected.violated

    def to_dict(self) -> dict[str, Any]:
        corrected = self.corrected
        return {
            "family": self.family,
            "trials": self.trials,
            "lhs": {"value": self.naive.lhs, "se": self.naive.lhs_se},
            "naive_rhs": {"value": self.naive.rhs, "se": self.naive.rhs_se},
            "corrected_rhs": None if corrected is None else {"value": corrected.rhs, "se": corrected.rhs_se},
            "violated_naive": self.naive.violated,
            "sigma_naive": self.naive.sigma,
            "violated_corrected": None if corrected is None else corrected.violated,
            "sigma_corrected": None if corrected is None else corrected.sigma,
            "p_d_observed": list(self.p_d_observed),
            "detected_means": list(self.detected_means),
            "settings_histogram": [list(row) for row in self.settings_histogram],
            "ingredients": {name: est.to_dict() for name, est in self.ingredients.items()},
            "note": self.note,
        }


@dataclass(frozen=True)
class CellUse:
    trials: np.ndarray
    ingredients: tuple[str, ...]

    @property
    def correlator(self) -> str | None:
        return next((name for name in self.ingredients if name in CORRELATOR_CELLS.values()), None)


def mismatched_trial_policy(batch: SampleBatch) -> dict[tuple[int, int], CellUse]:
    """Partition trials by setting pair and name what each pair may feed.

    Homodyne/count pairs feed only single-mode marginals (``x_j^2``, ``y_j^2``,
    ``n_j``); each trial lands in exactly one pair.
    """
    return {cell: CellUse(idx, cell_ingredients(cell)) for cell, idx in partition_trials(batch).items()}


@dataclass(frozen=True, eq=False)
class _Samplers:
    """Read-only distributions shared by every shard."""

    state: FockTensor
    joint: dict[tuple[int, int], GridPdf]
    count_marginals: tuple[np.ndarray, np.ndarray]
    conditional: dict[tuple[int, int, int], GridPdf]


def _theta(code: int) -> float:
    return code * math.pi / 2


def _conditional_state(state: FockTensor, counted_mode: int, n: int) -> FockTensor:
    """State of the other mode given ``n`` photons on ``counted_mode`` (0-based)."""
    if state.is_pure:
        psi = state.tensor()
        vector = psi[:, n] if counted_mode == 1 else psi[n, :]
        return FockTensor.pure((state.cutoffs[1 - counted_mode],), vector, normalize=True)
    rho = state.tensor()
    block = rho[:, n, :, n] if counted_mode == 1 else rho[n, :, n, :]
    block = (block + block.conj().T) / 2
    return FockTensor.mixed((state.cutoffs[1 - counted_mode],), block / np.trace(block).real)


def _prepare(state: FockTensor, config: ExperimentConfig) -> _Samplers:
    joint = {
        cell: quadrature_pdf(state, (_theta(cell[0]), _theta(cell[1])), config.grid_points, config.half_width)
        for cell in CORRELATOR_CELLS
        if SETTING_COUNT not in cell
    }
    probs = state.fock_probabilities()
    marginals = (probs.sum(axis=1), probs.sum(axis=0))
    conditional: dict[tuple[int, int, int], GridPdf] = {}
    for counted in (0, 1):
        for n in np.flatnonzero(marginals[counted] > 0):
            cond = _conditional_state(state, counted, int(n))
            for code in (0, 1):
                conditional[(counted, code, int(n))] = quadrature_pdf(
                    cond, (_theta(code),), config.grid_points, config.half_width
                )
    return _Samplers(state, joint, marginals, conditional)


def _draw_from(probs: np.ndarray, n: int, gen: np.random.Generator) -> np.ndarray:
    cdf = np.cumsum(probs)
    return np.minimum(np.searchsorted(cdf, gen.random(n) * cdf[-1], side="right"), cdf.size - 1)


def _draw_mixed_cell(
    samplers: _Samplers, counted: int, code: int, size: int, gen: np.random.Generator
) -> np.ndarray:
    """Counts on ``counted`` from its marginal, then quadratures from the conditional state."""
    out = np.zeros((size, 2))
    counts = _draw_from(samplers.count_marginals[counted], size, gen)
    out[:, counted] = counts
    for n in np.unique(counts):
        rows = np.flatnonzero(counts == n)
        pdf = samplers.conditional[(counted, code, int(n))]
        out[rows, 1 - counted] = draw_quadrature(pdf, rows.size, gen)[:, 0]
    return out


@dataclass
class _ShardResult:
    moments: dict[str, RunningMoments]
    histogram: np.ndarray
    batch: SampleBatch | None


def _run_shard(
    config: ExperimentConfig, samplers: _Samplers, shard: int, size: int, keep_batch: bool
) -> _ShardResult:
    settings_gen = rng.stream(config.seed, rng.SETTINGS, shard)
    r1 = settings_gen.choice(3, size=size, p=config.setting_probs[0])
    r2 = settings_gen.choice(3, size=size, p=config.setting_probs[1])
    settings = np.column_stack([r1, r2])

    outcomes = np.zeros((size, 2))
    for a in range(3):
        for b in range(3):
            idx = np.flatnonzero((r1 == a) & (r2 == b))
            if idx.size == 0:
                continue
            gen = rng.stream(config.seed, rng.OUTCOMES, shard, 3 * a + b)
            if a != SETTING_COUNT and b != SETTING_COUNT:
                outcomes[idx] = draw_quadrature(samplers.joint[(a, b)], idx.size, gen)
            elif a == SETTING_COUNT and b == SETTING_COUNT:
                outcomes[idx] = draw_counts(samplers.state, 1.0, idx.size, gen)
            elif a == SETTING_COUNT:
                outcomes[idx] = _draw_mixed_cell(samplers, 0, b, idx.size, gen)
            else:
                outcomes[idx] = _draw_mixed_cell(samplers, 1, a, idx.size, gen)

    counting = settings == SETTING_COUNT
    detected = np.ones((size, 2), dtype=bool)
    noise_gen = rng.stream(config.seed, rng.NOISE, shard)
    detection_gen = rng.stream(config.seed, rng.DETECTION, shard)
    for j in range(2):
        homodyne = ~counting[:, j]
        outcomes[homodyne, j] = attenuate_quadratures(outcomes[homodyne, j], config.eta, noise_gen)
    for j in range(2):
        rows = counting[:, j]
        counts = outcomes[rows, j].astype(np.int64)
        if config.eta < 1.0:
            counts = detection_gen.binomial(counts, config.eta)
        hit = detection_gen.random(counts.size) < config.p_d
        outcomes[rows, j] = np.where(hit, counts, 0)
        detected[rows, j] = hit

    thetas = np.where(counting, np.nan, settings * (math.pi / 2))
    batch = SampleBatch(settings, thetas, outcomes, detected, config.seed, (shard,))
    histogram = np.zeros((3, 3), dtype=np.int64)
    np.add.at(histogram, (r1, r2), 1)
    return _ShardResult(accumulate(batch), histogram, batch if keep_batch else None)


def _shard_sizes(trials: int, shard_size: int) -> list[int]:
    full, rest = divmod(trials, shard_size)
    return [shard_size] * full + ([rest] if rest else [])


def _check_cells(histogram: np.ndarray, minimum: int) -> None:
    short = [
        f"(R1={a} {SETTING_LABELS[a]}, R2={b} {SETTING_LABELS[b]}): {int(histogram[a, b])} trials"
        for (a, b) in CORRELATOR_CELLS
        if histogram[a, b] < minimum
    ]
    if short:
        raise InsufficientSamplesError(f"Setting cells below {minimum} trials: " + "; ".join(short))


def corrected_rhs(ingredients: dict[str, Estimate]) -> tuple[float, float]:
    """``prod_j [naive_j + (1 - p_j) <X_j^2 + Y_j^2>]`` with first-order SE.

    ``naive_j`` is the count mean with undetected events as 0, i.e. ``p_j <N_j>_D``.
    """
    terms, errors = [], []
    for j in (1, 2):
        naive, p_det = ingredients[f"n{j}"], ingredients[f"d{j}"]
        x_sq, y_sq = ingredients[f"x{j}sq"], ingredients[f"y{j}sq"]
        intensity = x_sq.mean + y_sq.mean
        missed = 1.0 - p_det.mean
        terms.append(naive.mean + missed * intensity)
        errors.append(
            math.sqrt(naive.se**2 + missed**2 * (x_sq.se**2 + y_sq.se**2) + intensity**2 * p_det.se**2)
        )
    value = terms[0] * terms[1]
    return value, math.hypot(terms[1] * errors[0], terms[0] * errors[1])


def run_experiment(
    config: ExperimentConfig,
    workers: int = 1,
    keep_batches: bool = False,
) -> tuple[LoopholeReport, list[SampleBatch]]:
    """Run every shard, merge in shard order, and assemble the naive and corrected verdicts."""
    started = time.monotonic()
    state = build(config.state)
    samplers = _prepare(state, config)
    sizes = _shard_sizes(config.trials, config.shard_size)

    with ThreadPoolExecutor(max_workers=max(workers, 1)) as pool:
        results = list(
            pool.map(lambda args: _run_shard(config, samplers, args[0], args[1], keep_batches), enumerate(sizes))
        )

    histogram = sum((r.histogram for r in results), np.zeros((3, 3), dtype=np.int64))
    _check_cells(histogram, config.min_cell_trials)
    moments = merge_moments(r.moments for r in results)
    ingredients = finalize(moments)
    missing = [name for name in ("x1sq", "y1sq", "x2sq", "y2sq", "d1", "d2") if name not in ingredients]
    if missing:
        raise InsufficientSamplesError(f"Too few trials for marginal ingredient(s): {', '.join(missing)}")

    lhs, lhs_se = lhs_estimate(config.family, ingredients)
    rhs, rhs_se = rhs_estimate(config.family, ingredients)
    ingredient_se = {name: est.se for name, est in ingredients.items()}
    naive = sampled_report(
        config.family, 1, lhs, lhs_se, rhs, rhs_se, multiplier=config.sigma_multiplier, ingredient_se=ingredient_se
    )
    corrected = None
    note = None
    if config.family == "second":
        bound, bound_se = corrected_rhs(ingredients)
        corrected = sampled_report(
            "second", 1, lhs, lhs_se, bound, bound_se, multiplier=config.sigma_multiplier, ingredient_se=ingredient_se
        )
    else:
        note = FIRST_FAMILY_NOTE

    report = LoopholeReport(
        family=config.family,
        naive=naive,
        corrected=corrected,
        p_d_observed=(ingredients["d1"].mean, ingredients["d2"].mean),
        detected_means=(
            ingredients["n1_detected"].mean if "n1_detected" in ingredients else math.nan,
            ingredients["n2_detected"].mean if "n2_detected" in ingredients else math.nan,
        ),
        settings_histogram=tuple(tuple(int(v) for v in row) for row in histogram),
        trials=config.trials,
        ingredients=ingredients,
        note=note,
    )
    log_run_event(
        "experiment_finished",
        level="DEBUG",
        family=config.family,
        trials=config.trials,
        p_d=config.p_d,
        eta=config.eta,
        violated=report.violated_corrected if corrected is not None else naive.violated,
        duration_ms=round((time.monotonic() - started) * 1000, 1),
    )
    batches = [r.batch for r in results if r.batch is not None]
    return report, batches


def trial_rows(batches: Iterable[SampleBatch]) -> Iterator[list[Any]]:
    """Per-trial rows in ``TRIAL_COLUMNS`` order, numbered across shards."""
    start = 0
    for batch in batches:
        for row, settings in zip(batch.csv_rows(start), batch.settings, strict=True):
            yield row + [int(settings[0]), int(settings[1])]
        start += batch.trials
