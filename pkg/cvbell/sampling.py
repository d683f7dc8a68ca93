"""Simulated homodyne and photon-counting measurements plus sample estimators.

Homodyne outcomes are drawn from the quadrature distribution evaluated on a
uniform grid (cell masses from the position representation, inverse-CDF draw,
uniform jitter inside the cell). Counting outcomes are drawn from the Fock
diagonal and thinned binomially.

Setting codes follow the measurement protocol: 0 = homodyne X (phase 0),
1 = homodyne Y (phase pi/2), 2 = photon counting, 3 = homodyne at any other phase.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Callable, Iterable, Mapping
from dataclasses import dataclass
from functools import cached_property
from typing import Any

import numpy as np
import scipy.linalg

from . import rng
from .fock import FockTensor, NumericalError, reduced_density
from .inequalities import DEFAULT_SIGMA_MULTIPLIER, Family, InequalityReport, lhs_components, sampled_report

logger = logging.getLogger(__name__)

SETTING_X = 0
SETTING_Y = 1
SETTING_COUNT = 2
SETTING_OTHER = 3
SETTING_LABELS = {SETTING_X: "X", SETTING_Y: "Y", SETTING_COUNT: "N", SETTING_OTHER: "Q"}

DEFAULT_GRID_POINTS = 2048
DEFAULT_HALF_WIDTH = 8.0
SUPPORT_FACTOR = 1.2
MASS_TOL = 1e-9
EIGEN_CUT = 1e-12
VACUUM_VARIANCE = 0.25

CSV_COLUMNS = ("trial", "setting_1", "setting_2", "outcome_1", "outcome_2", "detected_1", "detected_2")


class GridOverflowError(NumericalError):
    """Raised when probability mass outside the quadrature grid exceeds ``MASS_TOL``."""


class InsufficientSamplesError(RuntimeError):
    """Raised when a required setting combination has too few trials."""


def setting_code(theta: float) -> int:
    quarter = theta / (math.pi / 2)
    if abs(quarter) < 1e-12:
        return SETTING_X
    if abs(quarter - 1.0) < 1e-12:
        return SETTING_Y
    return SETTING_OTHER


def oscillator_functions(cutoff: int, x: np.ndarray) -> np.ndarray:
    """Energy eigenfunctions ``<x|n>`` for ``n = 0..cutoff`` in the variance-1/4 convention.

    Normalized Hermite functions by upward recurrence in ``q = sqrt(2) x``, then
    rescaled by ``2^(1/4)`` so each row integrates to 1 in ``x``.
    """
    q = np.sqrt(2.0) * np.asarray(x, dtype=float)
    out = np.empty((cutoff + 1, q.size))
    out[0] = np.pi**-0.25 * np.exp(-q * q / 2)
    if cutoff >= 1:
        out[1] = np.sqrt(2.0) * q * out[0]
    for n in range(1, cutoff):
        out[n + 1] = np.sqrt(2.0 / (n + 1)) * q * out[n] - np.sqrt(n / (n + 1)) * out[n - 1]
    return out * 2**0.25


@dataclass(frozen=True, eq=False)
class GridPdf:
    """Cell masses of a one- or two-mode quadrature distribution on ``[-L, L]``.

    ``grid`` holds the M cell centers shared by every mode; ``probabilities`` has
    shape ``(M,)`` or ``(M, M)`` and is renormalized to sum to 1.
    """

    grid: np.ndarray
    probabilities: np.ndarray
    thetas: tuple[float, ...]
    half_width: float

    def __post_init__(self) -> None:
        grid = np.array(self.grid, dtype=float)
        probs = np.array(self.probabilities, dtype=float)
        thetas = tuple(float(t) for t in self.thetas)
        if len(thetas) not in (1, 2):
            raise ValueError(f"Grid pdfs cover 1 or 2 modes, got {len(thetas)} phases")
        if probs.shape != (grid.size,) * len(thetas):
            raise ValueError(
                f"Probability shape {probs.shape} does not match {len(thetas)} modes on {grid.size} points"
            )
        if np.any(probs < -MASS_TOL):
            raise ValueError("Grid probabilities must be non-negative")
        probs = np.clip(probs, 0.0, None)
        total = float(probs.sum())
        if total <= 0.0:
            raise ValueError("Grid probabilities sum to zero")
        probs = probs / total
        grid.setflags(write=False)
        probs.setflags(write=False)
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "probabilities", probs)
        object.__setattr__(self, "thetas", thetas)

    @property
    def dimensionality(self) -> int:
        return len(self.thetas)

    @property
    def cell_width(self) -> float:
        return 2.0 * self.half_width / self.grid.size

    @cached_property
    def cdf(self) -> np.ndarray:
        return np.cumsum(self.probabilities.reshape(-1))

    def expectation(self, fn: Callable[..., np.ndarray]) -> float:
        if self.dimensionality == 1:
            return float(np.sum(self.probabilities * fn(self.grid)))
        return float(np.sum(self.probabilities * fn(self.grid[:, None], self.grid[None, :])))

    def moment(self, *powers: int) -> float:
        if len(powers) != self.dimensionality:
            raise ValueError(f"Need {self.dimensionality} powers, got {len(powers)}")
        if self.dimensionality == 1:
            return self.expectation(lambda x: x ** powers[0])
        return self.expectation(lambda x1, x2: x1 ** powers[0] * x2 ** powers[1])


def grid_centers(grid_points: int, half_width: float) -> np.ndarray:
    width = 2.0 * half_width / grid_points
    return -half_width + (np.arange(grid_points) + 0.5) * width


def _support_half_width(state: FockTensor, half_width: float) -> float:
    needed = SUPPORT_FACTOR * math.sqrt(max(state.cutoffs) + 1)
    if needed > half_width:
        logger.warning(
            "grid_widened",
            extra={"event": "grid_widened", "value": needed, "cutoff": max(state.cutoffs)},
        )
        return needed
    return half_width


def _rotate(state: FockTensor, thetas: tuple[float, ...]) -> np.ndarray:
    """Tensor of ``prod_j exp(-i theta_j N_j)`` applied to the state (and its bra for mixed)."""
    tensor = state.tensor()
    n_modes = state.num_modes
    for axis, (theta, dim) in enumerate(zip(thetas, state.dims, strict=True)):
        phase = np.exp(-1j * theta * np.arange(dim))
        shape = [1] * tensor.ndim
        shape[axis] = dim
        tensor = tensor * phase.reshape(shape)
        if not state.is_pure:
            shape = [1] * tensor.ndim
            shape[n_modes + axis] = dim
            tensor = tensor * phase.conj().reshape(shape)
    return tensor


def quadrature_pdf(
    state: FockTensor,
    thetas: Iterable[float],
    grid_points: int = DEFAULT_GRID_POINTS,
    half_width: float = DEFAULT_HALF_WIDTH,
) -> GridPdf:
    """Joint distribution of ``quadrature(theta_j)`` on every mode of a 1- or 2-mode state."""
    thetas = tuple(float(t) for t in thetas)
    if state.num_modes not in (1, 2):
        raise ValueError(f"Joint quadrature sampling is limited to 2 modes, got {state.num_modes}")
    if len(thetas) != state.num_modes:
        raise ValueError(f"Need one phase per mode, got {len(thetas)} for {state.num_modes} modes")
    if grid_points < 2:
        raise ValueError(f"grid_points must be >= 2, got {grid_points}")

    half_width = _support_half_width(state, half_width)
    x = grid_centers(grid_points, half_width)
    cell = 2.0 * half_width / grid_points
    basis = [oscillator_functions(c, x) for c in state.cutoffs]
    rotated = _rotate(state, thetas)

    if state.num_modes == 1:
        if state.is_pure:
            density = np.abs(basis[0].T @ rotated) ** 2
        else:
            density = np.einsum("mi,mn,ni->i", basis[0], rotated, basis[0]).real
        masses = density * cell
    else:
        if state.is_pure:
            density = np.abs(basis[0].T @ rotated @ basis[1]) ** 2
        else:
            dim = state.dimension
            weights, vectors = scipy.linalg.eigh(rotated.reshape(dim, dim))
            density = np.zeros((grid_points, grid_points))
            for weight, vector in zip(weights, vectors.T, strict=True):
                if weight < EIGEN_CUT:
                    continue
                amplitude = basis[0].T @ vector.reshape(state.dims) @ basis[1]
                density += weight * np.abs(amplitude) ** 2
        masses = density * cell * cell

    deficit = abs(1.0 - float(masses.sum()))
    if deficit > MASS_TOL:
        raise GridOverflowError(
            f"Quadrature grid [-{half_width}, {half_width}] with {grid_points} points misses mass {deficit:.3e}"
        )
    return GridPdf(x, masses, thetas, half_width)


def marginal_pdf(
    state: FockTensor,
    mode: int,
    theta: float,
    grid_points: int = DEFAULT_GRID_POINTS,
    half_width: float = DEFAULT_HALF_WIDTH,
) -> GridPdf:
    reduced = state if state.num_modes == 1 else reduced_density(state, [mode])
    return quadrature_pdf(reduced, (theta,), grid_points, half_width)


def draw_quadrature(pdf: GridPdf, n: int, gen: np.random.Generator) -> np.ndarray:
    """``(n, modes)`` outcomes by inverse CDF over cells plus uniform jitter within the cell."""
    if n < 1:
        raise ValueError(f"Need at least one trial, got {n}")
    cdf = pdf.cdf
    idx = np.searchsorted(cdf, gen.random(n) * cdf[-1], side="right")
    idx = np.minimum(idx, cdf.size - 1)
    cells = np.unravel_index(idx, pdf.probabilities.shape)
    jitter = gen.random((n, pdf.dimensionality)) - 0.5
    return np.column_stack([pdf.grid[c] for c in cells]) + jitter * pdf.cell_width


def draw_counts(state: FockTensor, eta: float, n: int, gen: np.random.Generator) -> np.ndarray:
    """``(n, modes)`` photon counts from the Fock diagonal, thinned with efficiency ``eta``."""
    if not 0.0 <= eta <= 1.0:
        raise ValueError(f"Efficiency eta must lie in [0, 1], got {eta}")
    if n < 1:
        raise ValueError(f"Need at least one trial, got {n}")
    probs = state.fock_probabilities()
    cdf = np.cumsum(probs.reshape(-1))
    idx = np.searchsorted(cdf, gen.random(n) * cdf[-1], side="right")
    idx = np.minimum(idx, cdf.size - 1)
    counts = np.column_stack(np.unravel_index(idx, probs.shape)).astype(np.int64)
    if eta < 1.0:
        counts = gen.binomial(counts, eta)
    return counts


@dataclass(frozen=True, eq=False)
class SampleBatch:
    """Per-trial settings, outcomes and detection flags for up to two modes."""

    settings: np.ndarray
    thetas: np.ndarray
    outcomes: np.ndarray
    detected: np.ndarray
    seed: int
    stream: tuple[int, ...] = ()

    def __post_init__(self) -> None:
        settings = np.asarray(self.settings, dtype=np.int64)
        if settings.ndim != 2:
            raise ValueError(f"settings must have shape (trials, modes), got {settings.shape}")
        for name in ("thetas", "outcomes", "detected"):
            value = np.asarray(getattr(self, name))
            if value.shape != settings.shape:
                raise ValueError(f"{name} shape {value.shape} does not match settings {settings.shape}")
        counting = settings == SETTING_COUNT
        outcomes = np.asarray(self.outcomes, dtype=float)
        if np.any(outcomes[counting] < 0) or np.any(outcomes[counting] != np.round(outcomes[counting])):
            raise ValueError("Counting outcomes must be non-negative integers")
        detected = np.asarray(self.detected, dtype=bool)
        if np.any(~detected & ~counting):
            raise ValueError("Only counting outcomes can be undetected")
        if np.any(outcomes[~detected] != 0):
            raise ValueError("Undetected counting outcomes must be recorded as 0")
        object.__setattr__(self, "settings", settings)
        object.__setattr__(self, "thetas", np.asarray(self.thetas, dtype=float))
        object.__setattr__(self, "outcomes", outcomes)
        object.__setattr__(self, "detected", detected)
        object.__setattr__(self, "stream", tuple(int(s) for s in self.stream))

    @property
    def trials(self) -> int:
        return int(self.settings.shape[0])

    @property
    def n_modes(self) -> int:
        return int(self.settings.shape[1])

    def csv_rows(self, start: int = 0) -> Iterable[list[Any]]:
        """Rows matching ``CSV_COLUMNS``; one-mode batches leave the mode-2 columns empty."""
        for t in range(self.trials):
            row: list[Any] = [start + t]
            cells = []
            for j in range(2):
                if j < self.n_modes:
                    cells.append(
                        (
                            _setting_label(int(self.settings[t, j]), float(self.thetas[t, j])),
                            _format_outcome(int(self.settings[t, j]), float(self.outcomes[t, j])),
                            int(self.detected[t, j]),
                        )
                    )
                else:
                    cells.append(("", "", ""))
            row += [c[0] for c in cells] + [c[1] for c in cells] + [c[2] for c in cells]
            yield row


def _setting_label(code: int, theta: float) -> str:
    if code == SETTING_OTHER:
        return f"Q({theta!r})"
    return SETTING_LABELS[code]


def _format_outcome(code: int, value: float) -> str:
    if code == SETTING_COUNT:
        return str(int(value))
    return repr(value)


def homodyne_batch(thetas: tuple[float, ...], outcomes: np.ndarray, seed: int, stream: tuple[int, ...]) -> SampleBatch:
    n = outcomes.shape[0]
    codes = np.tile([setting_code(t) for t in thetas], (n, 1))
    return SampleBatch(codes, np.tile(thetas, (n, 1)), outcomes, np.ones_like(codes, dtype=bool), seed, stream)


def attenuate_quadratures(outcomes: np.ndarray, eta: float, gen: np.random.Generator) -> np.ndarray:
    """Homodyne loss at the detector: ``sqrt(eta) x + sqrt(1 - eta) x_vac`` with vacuum variance 1/4."""
    if not 0.0 <= eta <= 1.0:
        raise ValueError(f"Efficiency eta must lie in [0, 1], got {eta}")
    if eta == 1.0:
        return outcomes
    noise = gen.normal(0.0, math.sqrt(VACUUM_VARIANCE), size=outcomes.shape)
    return math.sqrt(eta) * outcomes + math.sqrt(1.0 - eta) * noise


def sample_quadrature(
    pdf: GridPdf, n: int, seed: int, stream: tuple[int, ...] = (), eta: float = 1.0
) -> SampleBatch:
    outcomes = draw_quadrature(pdf, n, rng.stream(seed, rng.OUTCOMES, *stream))
    outcomes = attenuate_quadratures(outcomes, eta, rng.stream(seed, rng.NOISE, *stream))
    return homodyne_batch(pdf.thetas, outcomes, seed, stream)


def sample_counts(state: FockTensor, eta: float, n: int, seed: int, stream: tuple[int, ...] = ()) -> SampleBatch:
    if state.num_modes > 2:
        raise ValueError(f"Sample batches hold at most 2 modes, got {state.num_modes}")
    counts = draw_counts(state, eta, n, rng.stream(seed, rng.OUTCOMES, *stream))
    codes = np.full(counts.shape, SETTING_COUNT)
    return SampleBatch(codes, np.full(counts.shape, np.nan), counts, np.ones(counts.shape, dtype=bool), seed, stream)


@dataclass
class RunningMoments:
    """Mergeable count / sum / sum-of-squares accumulator."""

    n: int = 0
    total: float = 0.0
    total_sq: float = 0.0

    def add(self, values: np.ndarray) -> None:
        values = np.asarray(values, dtype=float)
        self.n += int(values.size)
        self.total += float(values.sum())
        self.total_sq += float(np.dot(values, values))

    def merge(self, other: RunningMoments) -> RunningMoments:
        return RunningMoments(self.n + other.n, self.total + other.total, self.total_sq + other.total_sq)

    @property
    def mean(self) -> float:
        return self.total / self.n if self.n else math.nan

    @property
    def variance(self) -> float:
        if self.n < 2:
            return math.nan
        return max((self.total_sq - self.n * self.mean**2) / (self.n - 1), 0.0)

    @property
    def standard_error(self) -> float:
        return math.sqrt(self.variance / self.n) if self.n >= 2 else math.nan

    def to_estimate(self) -> Estimate:
        return Estimate(self.mean, self.standard_error, self.n)


@dataclass(frozen=True)
class Estimate:
    mean: float
    se: float
    n: int

    def to_dict(self) -> dict[str, Any]:
        return {"mean": self.mean, "se": self.se, "n": self.n}


# Setting-pair cell -> correlator it feeds (homodyne/homodyne and count/count only).
CORRELATOR_CELLS: dict[tuple[int, int], str] = {
    (SETTING_X, SETTING_X): "xx",
    (SETTING_Y, SETTING_Y): "yy",
    (SETTING_X, SETTING_Y): "xy",
    (SETTING_Y, SETTING_X): "yx",
    (SETTING_COUNT, SETTING_COUNT): "n1n2",
}
REQUIRED_INGREDIENTS = ("xx", "yy", "xy", "yx", "n1n2", "n1", "n2")
_MARGINAL_NAMES = {SETTING_X: "x{}sq", SETTING_Y: "y{}sq", SETTING_COUNT: "n{}"}


def cell_ingredients(cell: tuple[int, int]) -> tuple[str, ...]:
    """Every ingredient a setting pair contributes to; correlators only from matching cells."""
    names = [CORRELATOR_CELLS[cell]] if cell in CORRELATOR_CELLS else []
    for j, code in enumerate(cell, start=1):
        if code in _MARGINAL_NAMES:
            names.append(_MARGINAL_NAMES[code].format(j))
            if code == SETTING_COUNT:
                names += [f"n{j}_detected", f"d{j}"]
    return tuple(names)


def partition_trials(batch: SampleBatch) -> dict[tuple[int, int], np.ndarray]:
    """Trial indices per setting pair, in ascending trial order."""
    if batch.n_modes != 2:
        raise ValueError(f"Setting-pair partition needs 2-mode batches, got {batch.n_modes}")
    keys = batch.settings[:, 0] * 4 + batch.settings[:, 1]
    return {
        (int(code) // 4, int(code) % 4): np.flatnonzero(keys == code)
        for code in np.unique(keys)
    }


def accumulate(batch: SampleBatch, into: dict[str, RunningMoments] | None = None) -> dict[str, RunningMoments]:
    """Add a two-mode batch's contributions to per-ingredient running moments."""
    moments = into if into is not None else {}
    for cell, idx in partition_trials(batch).items():
        outcomes = batch.outcomes[idx]
        detected = batch.detected[idx]
        for name in cell_ingredients(cell):
            if name in CORRELATOR_CELLS.values():
                values = outcomes[:, 0] * outcomes[:, 1]
            else:
                j = int(name[1]) - 1
                if name.startswith("d"):
                    values = detected[:, j].astype(float)
                elif name.endswith("_detected"):
                    values = outcomes[detected[:, j], j]
                elif name.endswith("sq"):
                    values = outcomes[:, j] ** 2
                else:
                    values = outcomes[:, j]
            moments.setdefault(name, RunningMoments()).add(values)
    return moments


def merge_moments(parts: Iterable[Mapping[str, RunningMoments]]) -> dict[str, RunningMoments]:
    """Merge per-shard moments in the order given."""
    merged: dict[str, RunningMoments] = {}
    for part in parts:
        for name in sorted(part):
            merged[name] = merged.get(name, RunningMoments()).merge(part[name])
    return merged


def finalize(moments: Mapping[str, RunningMoments], min_trials: int = 2) -> dict[str, Estimate]:
    missing = [name for name in REQUIRED_INGREDIENTS if moments.get(name, RunningMoments()).n < min_trials]
    if missing:
        raise InsufficientSamplesError(
            f"Fewer than {min_trials} trials for required ingredient(s): {', '.join(missing)}"
        )
    return {name: m.to_estimate() for name, m in sorted(moments.items()) if m.n >= 2}


def estimate_ingredients(batches: Iterable[SampleBatch], min_trials: int = 2) -> dict[str, Estimate]:
    """Sample means with SE = stddev/sqrt(n) for the correlators, count products and marginals.

    Batches are split by setting pair; only matching pairs feed correlators.
    """
    moments: dict[str, RunningMoments] = {}
    for batch in batches:
        accumulate(batch, moments)
    return finalize(moments, min_trials)


def lhs_estimate(family: Family, ingredients: Mapping[str, Estimate]) -> tuple[float, float]:
    """Bias-corrected ``u^2 + v^2`` and its standard error.

    ``u`` and ``v`` are sums of correlators from disjoint cells, so their variances
    add; ``E[u_hat^2] = u^2 + var(u)`` and the SE keeps the ``2 var^2`` term.
    """
    means = {name: ingredients[name].mean for name in ("xx", "yy", "xy", "yx")}
    u, v = lhs_components(family, means)
    var_u = ingredients["xx"].se ** 2 + ingredients["yy"].se ** 2
    var_v = ingredients["xy"].se ** 2 + ingredients["yx"].se ** 2
    value = u * u + v * v - var_u - var_v
    se = math.sqrt(4 * u * u * var_u + 2 * var_u**2 + 4 * v * v * var_v + 2 * var_v**2)
    return value, se


def rhs_estimate(family: Family, ingredients: Mapping[str, Estimate]) -> tuple[float, float]:
    if family == "first":
        return ingredients["n1n2"].mean, ingredients["n1n2"].se
    n1, n2 = ingredients["n1"], ingredients["n2"]
    return n1.mean * n2.mean, math.hypot(n2.mean * n1.se, n1.mean * n2.se)


def sampled_reports(
    ingredients: Mapping[str, Estimate],
    families: Iterable[Family] = ("first", "second"),
    multiplier: float = DEFAULT_SIGMA_MULTIPLIER,
) -> list[InequalityReport]:
    ingredient_se = {name: est.se for name, est in ingredients.items()}
    reports = []
    for family in families:
        lhs, lhs_se = lhs_estimate(family, ingredients)
        rhs, rhs_se = rhs_estimate(family, ingredients)
        reports.append(
            sampled_report(family, 1, lhs, lhs_se, rhs, rhs_se, multiplier=multiplier, ingredient_se=ingredient_se)
        )
    return reports


@dataclass(frozen=True)
class SamplingPlan:
    """Trials per setting pair for a stand-alone sampled evaluation of a two-mode state."""

    trials: int
    eta: float = 1.0
    grid_points: int = DEFAULT_GRID_POINTS
    half_width: float = DEFAULT_HALF_WIDTH
    seed: int = 0
    phase_pairs: tuple[tuple[float, float], ...] = (
        (0.0, 0.0),
        (math.pi / 2, math.pi / 2),
        (0.0, math.pi / 2),
        (math.pi / 2, 0.0),
    )


def sample_all_settings(state: FockTensor, plan: SamplingPlan) -> list[SampleBatch]:
    """One homodyne batch per phase pair and one counting batch, each on its own stream."""
    batches = []
    for cell, thetas in enumerate(plan.phase_pairs):
        pdf = quadrature_pdf(state, thetas, plan.grid_points, plan.half_width)
        batches.append(sample_quadrature(pdf, plan.trials, plan.seed, (cell,), plan.eta))
    batches.append(sample_counts(state, plan.eta, plan.trials, plan.seed, (len(plan.phase_pairs),)))
    logger.debug("settings_sampled", extra={"event": "settings_sampled", "trials": plan.trials, "seed": plan.seed})
    return batches
