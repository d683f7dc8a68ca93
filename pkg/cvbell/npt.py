"""Partial-transpose spectra and the PT expectation rule behind the NPT implication.

The rule used throughout: for local operators ``O_A`` and ``O_B``,
``<O_A O_B>`` on ``rho^{T_B}`` equals ``<O_A O_B^T>`` on ``rho``, with the transpose
(equivalently ``O_B^{dag *}``) taken in the Fock basis.
"""

from __future__ import annotations

import logging
from collections.abc import Iterable
from dataclasses import dataclass
from typing import Any, Literal

import numpy as np
import scipy.linalg

from .fock import (
    FockTensor,
    ModeOp,
    NumericalError,
    annihilate,
    check_mode,
    expect,
    hermitian_eigenvalues,
    partial_transpose,
)
from .inequalities import Family, evaluate

logger = logging.getLogger(__name__)

PT_TOL = 1e-10
RULE_TOL = 1e-9

Method = Literal["auto", "schmidt", "dense"]


@dataclass(frozen=True)
class PTReport:
    min_eig: float
    negativity: float
    is_npt: bool
    partition: tuple[int, ...]
    method: str = "dense"
    tol: float = PT_TOL

    def to_dict(self) -> dict[str, Any]:
        return {
            "partition": list(self.partition),
            "min_eig": self.min_eig,
            "negativity": self.negativity,
            "is_npt": self.is_npt,
            "method": self.method,
            "extension": ["negativity"],
        }


def second_group(n_modes: int, k: int) -> tuple[int, ...]:
    """Modes ``k+1..N``, the group transposed for bipartition ``k``."""
    if not 1 <= k <= n_modes - 1:
        raise ValueError(f"Bipartition k must lie in 1..{n_modes - 1}, got {k}")
    return tuple(range(k + 1, n_modes + 1))


def _validate_partition(state: FockTensor, modes: Iterable[int]) -> tuple[int, ...]:
    subset = tuple(sorted({int(m) for m in modes}))
    if not subset:
        raise ValueError("Partial transpose needs a non-empty mode subset")
    for mode in subset:
        check_mode(state, mode)
    if len(subset) == state.num_modes:
        raise ValueError("Transposing every mode is a global transpose, not a partial one")
    return subset


def _schmidt_coefficients(state: FockTensor, subset: tuple[int, ...]) -> np.ndarray:
    transposed = [m - 1 for m in subset]
    kept = [a for a in range(state.num_modes) if a not in transposed]
    dim_kept = int(np.prod([state.dims[a] for a in kept]))
    matrix = np.transpose(state.tensor(), kept + transposed).reshape(dim_kept, -1)
    return scipy.linalg.svdvals(matrix)


def _schmidt_report(state: FockTensor, subset: tuple[int, ...], tol: float) -> PTReport:
    # PT spectrum of a pure state: {s_i^2} and {+s_i s_j, -s_i s_j} for i < j.
    s = _schmidt_coefficients(state, subset)
    if s.size >= 2:
        min_eig = -float(s[0] * s[1])
    else:
        min_eig = 0.0 if state.dimension > 1 else float(s[0] ** 2)
    pairs = np.outer(s, s)[np.triu_indices(s.size, k=1)]
    negativity = float(pairs[pairs > tol].sum())
    return PTReport(min_eig, negativity, min_eig < -tol, subset, "schmidt", tol)


def _dense_report(state: FockTensor, subset: tuple[int, ...], tol: float) -> PTReport:
    spectrum = hermitian_eigenvalues(partial_transpose(state, subset).data)
    min_eig = float(spectrum[0])
    negativity = float(-spectrum[spectrum < -tol].sum())
    return PTReport(min_eig, negativity, min_eig < -tol, subset, "dense", tol)


def pt_report(state: FockTensor, modes: Iterable[int], method: Method = "auto", tol: float = PT_TOL) -> PTReport:
    """Lowest PT eigenvalue and negativity; pure inputs use the Schmidt spectrum unless ``method='dense'``."""
    subset = _validate_partition(state, modes)
    if method == "schmidt" and not state.is_pure:
        raise ValueError("The Schmidt method needs a pure state")
    use_schmidt = method == "schmidt" or (method == "auto" and state.is_pure)
    report = _schmidt_report(state, subset, tol) if use_schmidt else _dense_report(state, subset, tol)
    logger.debug(
        "pt_report",
        extra={"event": "pt_report", "min_eig": report.min_eig, "dimension": state.dimension},
    )
    return report


def _groups(state: FockTensor, k: int) -> tuple[list[ModeOp], list[ModeOp]]:
    n = state.num_modes
    group_a = [annihilate(m, state.cutoffs[m - 1]) for m in range(1, k + 1)]
    group_b = [annihilate(m, state.cutoffs[m - 1]).conjugate() for m in second_group(n, k)]
    return group_a, group_b


def _daggers(ops: list[ModeOp]) -> list[ModeOp]:
    return [op.dagger() for op in ops]


def pt_moment_check(state: FockTensor, family: Family, k: int = 1) -> float:
    """``rhs - lhs`` assembled from expectations on ``rho^{T_B}``.

    With ``C_A = prod_A a`` and ``C_B* = prod_B conj(a)``:

    * first:  ``|<C_A C_B*>|^2`` against ``<C_A^dag C_A (C_B*)^dag C_B*>``
    * second: ``|<C_A^dag C_B*>|^2`` against ``<C_A^dag C_A> <(C_B*)^dag C_B*>``

    all on the transposed state. Raises :class:`NumericalError` if the result
    disagrees with the direct evaluation by more than ``RULE_TOL``.
    """
    transposed = partial_transpose(state, second_group(state.num_modes, k))
    group_a, group_b = _groups(state, k)

    if family == "first":
        lhs = expect(transposed, group_a + group_b).abs2
        rhs = expect(transposed, _daggers(group_a) + group_a + _daggers(group_b) + group_b).real
    elif family == "second":
        lhs = expect(transposed, _daggers(group_a) + group_b).abs2
        rhs = (
            expect(transposed, _daggers(group_a) + group_a).real
            * expect(transposed, _daggers(group_b) + group_b).real
        )
    else:
        raise ValueError(f"Unknown inequality family {family!r}")

    gap = rhs - lhs
    direct = evaluate(state, family, k)
    mismatch = abs(gap - (direct.rhs - direct.lhs))
    if mismatch > RULE_TOL:
        raise NumericalError(f"PT expectation rule mismatch of {mismatch:.3e} for family {family}, k={k}")
    return gap
