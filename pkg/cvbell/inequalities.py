"""Field-amplitude (first family) and photon-number (second family) Bell inequalities.

For a bipartition of N modes into ``A = {1..k}`` and ``B = {k+1..N}``:

* first family:  ``|<prod_A a  prod_B a^dag>|^2 <= <prod_all N>``
* second family: ``|<prod_all a>|^2 <= <prod_A N> <prod_B N>``

Local hidden-variable models obey both; a quantum state violating either is NPT.
Swapping the right-hand sides gives two inequalities no quantum state violates.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Iterable, Mapping
from dataclasses import dataclass
from typing import Any, Literal

from .fock import FockTensor, annihilate, create, expect, number, x_quadrature, y_quadrature

logger = logging.getLogger(__name__)

Family = Literal["first", "second"]
FAMILIES: tuple[Family, ...] = ("first", "second")

ANALYTIC_TOL = 1e-10
RATIO_FLOOR = 1e-14
DEFAULT_SIGMA_MULTIPLIER = 3.0


def violation_ratio(lhs: float, rhs: float, tol: float) -> float:
    """``lhs / rhs``; ``inf`` when rhs vanishes under a nonzero lhs, ``nan`` when both vanish.

    Both values are kept as floats. CSV files carry them as the cells ``inf`` and ``nan``,
    which ``float()`` parses back; JSON carries the strings ``"inf"`` and ``"nan"``. An
    ``inf`` ratio is a violation with a vanishing bound, while ``nan`` means there is nothing
    to compare and ``violated`` is false.
    """
    if rhs < RATIO_FLOOR:
        return math.inf if lhs > tol else math.nan
    return lhs / rhs


@dataclass(frozen=True)
class InequalityReport:
    family: Family
    n_modes: int
    k: int
    lhs: float
    rhs: float
    ratio: float
    violated: bool
    tol: float
    source: str = "analytic"
    sigma: float | None = None
    lhs_se: float | None = None
    rhs_se: float | None = None
    ingredient_se: Mapping[str, float] | None = None

    def to_dict(self) -> dict[str, Any]:
        """Serialization record; the key set is a compatibility contract."""
        source: Any = self.source
        if self.source == "sampled":
            source = {
                "kind": "sampled",
                "lhs_se": self.lhs_se,
                "rhs_se": self.rhs_se,
                "ingredient_se": dict(self.ingredient_se or {}),
            }
        return {
            "family": self.family,
            "N": self.n_modes,
            "k": self.k,
            "lhs": self.lhs,
            "rhs": self.rhs,
            "ratio": self.ratio,
            "violated": self.violated,
            "sigma": self.sigma,
            "source": source,
        }


def _check_partition(state: FockTensor, k: int) -> None:
    if state.num_modes < 2:
        raise ValueError(f"Bell inequalities need at least 2 modes, got {state.num_modes}")
    if not 1 <= k <= state.num_modes - 1:
        raise ValueError(f"Bipartition k must lie in 1..{state.num_modes - 1}, got {k}")


def _number_product(state: FockTensor, modes: Iterable[int]) -> float:
    return expect(state, [number(m, state.cutoffs[m - 1]) for m in modes]).real


def first_family_terms(state: FockTensor, k: int) -> tuple[float, float]:
    _check_partition(state, k)
    n = state.num_modes
    ops = [annihilate(m, state.cutoffs[m - 1]) for m in range(1, k + 1)]
    ops += [create(m, state.cutoffs[m - 1]) for m in range(k + 1, n + 1)]
    lhs = expect(state, ops).abs2
    rhs = _number_product(state, range(1, n + 1))
    return lhs, rhs


def second_family_terms(state: FockTensor, k: int) -> tuple[float, float]:
    _check_partition(state, k)
    n = state.num_modes
    lhs = expect(state, [annihilate(m, state.cutoffs[m - 1]) for m in range(1, n + 1)]).abs2
    rhs = _number_product(state, range(1, k + 1)) * _number_product(state, range(k + 1, n + 1))
    return lhs, rhs


def _analytic_report(family: Family, state: FockTensor, k: int, lhs: float, rhs: float) -> InequalityReport:
    ratio = violation_ratio(lhs, rhs, ANALYTIC_TOL)
    report = InequalityReport(
        family=family,
        n_modes=state.num_modes,
        k=k,
        lhs=lhs,
        rhs=rhs,
        ratio=ratio,
        violated=lhs - rhs > ANALYTIC_TOL,
        tol=ANALYTIC_TOL,
    )
    logger.debug(
        "inequality_evaluated",
        extra={"event": "inequality_evaluated", "family": family, "k": k, "ratio": ratio, "violated": report.violated},
    )
    return report


def eval_first(state: FockTensor, k: int = 1) -> InequalityReport:
    lhs, rhs = first_family_terms(state, k)
    return _analytic_report("first", state, k, lhs, rhs)


def eval_second(state: FockTensor, k: int = 1) -> InequalityReport:
    lhs, rhs = second_family_terms(state, k)
    return _analytic_report("second", state, k, lhs, rhs)


def evaluate(state: FockTensor, family: Family, k: int = 1) -> InequalityReport:
    if family == "first":
        return eval_first(state, k)
    if family == "second":
        return eval_second(state, k)
    raise ValueError(f"Unknown inequality family {family!r}")


def evaluate_all(
    state: FockTensor,
    families: Iterable[Family] = FAMILIES,
    partitions: Iterable[int] | None = None,
) -> list[InequalityReport]:
    """Every requested family over every requested bipartition (default: all of them)."""
    ks = list(partitions) if partitions is not None else list(range(1, state.num_modes))
    return [evaluate(state, family, k) for family in families for k in ks]


def counterpart_gaps(state: FockTensor, k: int = 1) -> tuple[float, float]:
    """Gaps of the two never-violated counterparts; both are >= 0 for every quantum state.

    Returns ``(<prod_A N><prod_B N> - first lhs, <prod_all N> - second lhs)``.
    """
    first_lhs, first_rhs = first_family_terms(state, k)
    second_lhs, second_rhs = second_family_terms(state, k)
    return second_rhs - first_lhs, first_rhs - second_lhs


def quadrature_correlators(state: FockTensor) -> dict[str, float]:
    """Two-mode quadrature correlators ``<X1X2>, <Y1Y2>, <X1Y2>, <Y1X2>``."""
    if state.num_modes != 2:
        raise ValueError(f"Quadrature decomposition needs exactly 2 modes, got {state.num_modes}")
    c1, c2 = state.cutoffs
    x1, y1 = x_quadrature(1, c1), y_quadrature(1, c1)
    x2, y2 = x_quadrature(2, c2), y_quadrature(2, c2)
    return {
        "xx": expect(state, [x1, x2]).real,
        "yy": expect(state, [y1, y2]).real,
        "xy": expect(state, [x1, y2]).real,
        "yx": expect(state, [y1, x2]).real,
    }


def lhs_components(family: Family, correlators: Mapping[str, float]) -> tuple[float, float]:
    """Real and imaginary parts of ``<a1 a2^dag>`` (first) or ``<a1 a2>`` (second)."""
    xx, yy, xy, yx = correlators["xx"], correlators["yy"], correlators["xy"], correlators["yx"]
    if family == "first":
        return xx + yy, yx - xy
    if family == "second":
        return xx - yy, xy + yx
    raise ValueError(f"Unknown inequality family {family!r}")


def quadrature_decomposition_first(state: FockTensor) -> float:
    u, v = lhs_components("first", quadrature_correlators(state))
    return u * u + v * v


def quadrature_decomposition_second(state: FockTensor) -> float:
    u, v = lhs_components("second", quadrature_correlators(state))
    return u * u + v * v


def sampled_report(
    family: Family,
    k: int,
    lhs: float,
    lhs_se: float,
    rhs: float,
    rhs_se: float,
    n_modes: int = 2,
    multiplier: float = DEFAULT_SIGMA_MULTIPLIER,
    ingredient_se: Mapping[str, float] | None = None,
) -> InequalityReport:
    """Verdict from estimates: violated when ``lhs - rhs`` exceeds ``multiplier`` combined SEs."""
    combined = math.hypot(lhs_se, rhs_se)
    gap = lhs - rhs
    tol = multiplier * combined
    if combined > 0:
        sigma = gap / combined
    else:
        sigma = math.copysign(math.inf, gap) if gap != 0 else 0.0
    return InequalityReport(
        family=family,
        n_modes=n_modes,
        k=k,
        lhs=lhs,
        rhs=rhs,
        ratio=violation_ratio(lhs, rhs, tol),
        violated=gap > tol,
        tol=tol,
        source="sampled",
        sigma=sigma,
        lhs_se=lhs_se,
        rhs_se=rhs_se,
        ingredient_se=dict(ingredient_se or {}),
    )
