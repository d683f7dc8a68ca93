"""Truncated Fock-space linear algebra for multimode optical states.

Basis layout is row-major over modes with mode 1 slowest: the flat index of
``|n_1, ..., n_N>`` is ``np.ravel_multi_index((n_1, ..., n_N), dims)`` with
``dims = (c_1 + 1, ..., c_N + 1)``. Modes are 1-based everywhere in the public API.

Quadratures use ``X = (a + a^dag)/2`` and ``Y = (a - a^dag)/(2i)`` so that
``a = X + iY`` and the vacuum variance is 1/4.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Iterable, Sequence
from dataclasses import dataclass
from typing import Literal

import numpy as np
import scipy.linalg
from scipy.special import comb

logger = logging.getLogger(__name__)

MAX_DIMENSION = 4096
NORM_TOL = 1e-10
HERMITIAN_TOL = 1e-12
POSITIVITY_TOL = 1e-10
EIGEN_RTOL = 1e-9

StateKind = Literal["pure", "mixed"]
OpKind = Literal["annihilate", "create", "number", "quadrature", "matrix"]


class NumericalError(ArithmeticError):
    """Raised when a computation cannot be carried out to the required accuracy."""


class InsufficientCutoffError(NumericalError):
    """Raised when the neglected Fock tail exceeds the truncation tolerance."""


class DimensionCapError(NumericalError):
    """Raised when a Hilbert-space dimension exceeds ``MAX_DIMENSION``."""


class CutoffMismatchError(NumericalError):
    """Raised when an operator matrix does not match the state's cutoff on its mode."""


class NonHermitianError(NumericalError):
    """Raised when a matrix expected to be Hermitian is not, beyond tolerance."""


class ModeIndexError(IndexError):
    """Raised for a mode index outside ``1..num_modes``."""


@dataclass(frozen=True, eq=False)
class FockTensor:
    """Immutable state on a truncated multimode Fock space.

    ``data`` is a length-D amplitude vector for pure states and a D x D density
    matrix for mixed states, D = prod(c_j + 1). Construction validates
    normalization, Hermiticity and the dimension cap; positivity is checked on
    demand with :meth:`is_positive` because partial transposes are legitimately
    non-positive.
    """

    cutoffs: tuple[int, ...]
    kind: StateKind
    data: np.ndarray

    def __post_init__(self) -> None:
        cutoffs = tuple(int(c) for c in self.cutoffs)
        if not cutoffs:
            raise ValueError("A Fock tensor needs at least one mode")
        if any(c < 0 for c in cutoffs):
            raise ValueError(f"Cutoffs must be non-negative, got {cutoffs}")
        object.__setattr__(self, "cutoffs", cutoffs)

        dim = math.prod(c + 1 for c in cutoffs)
        if dim > MAX_DIMENSION:
            raise DimensionCapError(f"Dimension {dim} for cutoffs {cutoffs} exceeds the cap of {MAX_DIMENSION}")

        data = np.array(self.data, dtype=np.complex128)
        if self.kind == "pure":
            if data.size != dim:
                raise ValueError(f"Pure state needs {dim} amplitudes, got {data.size}")
            data = data.reshape(dim)
            norm = float(np.vdot(data, data).real)
            if abs(norm - 1.0) > NORM_TOL:
                raise ValueError(f"Pure state is not normalized (norm^2 = {norm!r})")
        elif self.kind == "mixed":
            if data.size != dim * dim:
                raise ValueError(f"Density matrix needs shape ({dim}, {dim}), got {data.shape}")
            data = data.reshape(dim, dim)
            asymmetry = float(np.max(np.abs(data - data.conj().T))) if dim else 0.0
            if asymmetry > HERMITIAN_TOL:
                raise NonHermitianError(f"Density matrix is not Hermitian (max deviation {asymmetry:.3e})")
            trace = complex(np.trace(data))
            if abs(trace - 1.0) > NORM_TOL:
                raise ValueError(f"Density matrix trace is {trace!r}, expected 1")
        else:
            raise ValueError(f"Unknown state kind: {self.kind!r}")

        data.setflags(write=False)
        object.__setattr__(self, "data", data)

    @classmethod
    def pure(cls, cutoffs: Sequence[int], amplitudes: np.ndarray, normalize: bool = False) -> FockTensor:
        vector = np.asarray(amplitudes, dtype=np.complex128).reshape(-1)
        if normalize:
            norm = float(np.linalg.norm(vector))
            if norm == 0.0:
                raise ValueError("Cannot normalize the zero vector")
            vector = vector / norm
        return cls(tuple(cutoffs), "pure", vector)

    @classmethod
    def mixed(cls, cutoffs: Sequence[int], matrix: np.ndarray) -> FockTensor:
        return cls(tuple(cutoffs), "mixed", matrix)

    @property
    def num_modes(self) -> int:
        return len(self.cutoffs)

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(c + 1 for c in self.cutoffs)

    @property
    def dimension(self) -> int:
        return math.prod(self.dims)

    @property
    def is_pure(self) -> bool:
        return self.kind == "pure"

    def tensor(self) -> np.ndarray:
        """Return the data reshaped to ``dims`` (pure) or ``dims + dims`` (mixed)."""
        if self.is_pure:
            return self.data.reshape(self.dims)
        return self.data.reshape(self.dims + self.dims)

    def density_matrix(self) -> np.ndarray:
        if self.is_pure:
            return np.outer(self.data, self.data.conj())
        return self.data

    def as_density(self) -> FockTensor:
        """Promote to a density operator (no-op for mixed states)."""
        if not self.is_pure:
            return self
        return FockTensor(self.cutoffs, "mixed", self.density_matrix())

    def fock_probabilities(self) -> np.ndarray:
        """Joint photon-number distribution, shape ``dims``."""
        if self.is_pure:
            probs = np.abs(self.data) ** 2
        else:
            probs = np.clip(np.diagonal(self.data).real, 0.0, None)
        return probs.reshape(self.dims)

    def is_positive(self, tol: float = POSITIVITY_TOL) -> bool:
        if self.is_pure:
            return True
        return min_eigenvalue(self) >= -tol


@dataclass(frozen=True)
class ComplexExpectation:
    """Expectation value of a (possibly non-Hermitian) operator product."""

    value: complex
    variance_proxy: float | None = None

    def __post_init__(self) -> None:
        value = complex(self.value)
        if not (math.isfinite(value.real) and math.isfinite(value.imag)):
            raise NumericalError(f"Non-finite expectation value {value!r}")
        object.__setattr__(self, "value", value)

    @property
    def real(self) -> float:
        return self.value.real

    @property
    def imag(self) -> float:
        return self.value.imag

    @property
    def abs2(self) -> float:
        return abs(self.value) ** 2


@dataclass(frozen=True, eq=False)
class ModeOp:
    """Single-mode operator embedded at ``mode`` (1-based) of a multimode space."""

    mode: int
    kind: OpKind
    matrix: np.ndarray
    theta: float | None = None

    def __post_init__(self) -> None:
        if self.mode < 1:
            raise ModeIndexError(f"Mode indices are 1-based, got {self.mode}")
        matrix = np.array(self.matrix, dtype=np.complex128)
        if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
            raise ValueError(f"Mode operator must be a square matrix, got shape {matrix.shape}")
        matrix.setflags(write=False)
        object.__setattr__(self, "matrix", matrix)

    @classmethod
    def from_matrix(cls, mode: int, matrix: np.ndarray) -> ModeOp:
        return cls(mode, "matrix", matrix)

    @property
    def cutoff(self) -> int:
        return self.matrix.shape[0] - 1

    @property
    def label(self) -> str:
        if self.kind == "quadrature":
            return f"quadrature[{self.theta:.6g}]_{self.mode}"
        return f"{self.kind}_{self.mode}"

    def dagger(self) -> ModeOp:
        swapped: dict[str, OpKind] = {"annihilate": "create", "create": "annihilate"}
        kind = swapped.get(self.kind, self.kind)
        return ModeOp(self.mode, kind, self.matrix.conj().T, self.theta)

    def conjugate(self) -> ModeOp:
        """Elementwise complex conjugate in the Fock basis."""
        kind: OpKind = self.kind if self.kind in ("annihilate", "create", "number") else "matrix"
        return ModeOp(self.mode, kind, self.matrix.conj())

    def transpose(self) -> ModeOp:
        return ModeOp.from_matrix(self.mode, self.matrix.T)


def _lowering_matrix(cutoff: int) -> np.ndarray:
    return np.diag(np.sqrt(np.arange(1, cutoff + 1, dtype=float)), k=1).astype(np.complex128)


def _unit_phase(theta: float) -> tuple[float, float]:
    """cos/sin of theta, exact at multiples of pi/2."""
    quarter = theta / (math.pi / 2)
    nearest = round(quarter)
    if abs(quarter - nearest) < 1e-12:
        return ((1.0, 0.0), (0.0, 1.0), (-1.0, 0.0), (0.0, -1.0))[nearest % 4]
    return math.cos(theta), math.sin(theta)


def annihilate(mode: int, cutoff: int) -> ModeOp:
    return ModeOp(mode, "annihilate", _lowering_matrix(cutoff))


def create(mode: int, cutoff: int) -> ModeOp:
    return ModeOp(mode, "create", _lowering_matrix(cutoff).T)


def number(mode: int, cutoff: int) -> ModeOp:
    return ModeOp(mode, "number", np.diag(np.arange(cutoff + 1, dtype=float)).astype(np.complex128))


def quadrature(mode: int, cutoff: int, theta: float) -> ModeOp:
    """``(a e^{-i theta} + a^dag e^{i theta}) / 2``, built as ``cos(theta) X + sin(theta) Y``."""
    a = _lowering_matrix(cutoff)
    x = (a + a.T) / 2
    y = 0.5j * (a.T - a)
    cos, sin = _unit_phase(theta)
    return ModeOp(mode, "quadrature", cos * x + sin * y, float(theta))


def x_quadrature(mode: int, cutoff: int) -> ModeOp:
    return quadrature(mode, cutoff, 0.0)


def y_quadrature(mode: int, cutoff: int) -> ModeOp:
    return quadrature(mode, cutoff, math.pi / 2)


def phase_rotation(cutoff: int, theta: float) -> np.ndarray:
    """Diagonal ``exp(-i theta N)``."""
    return np.diag(np.exp(-1j * theta * np.arange(cutoff + 1)))


def check_mode(state: FockTensor, mode: int) -> None:
    if not 1 <= mode <= state.num_modes:
        raise ModeIndexError(f"Mode {mode} out of range for a {state.num_modes}-mode state")


def _check_op(state: FockTensor, op: ModeOp) -> None:
    check_mode(state, op.mode)
    expected = state.cutoffs[op.mode - 1]
    if op.cutoff != expected:
        raise CutoffMismatchError(f"Operator {op.label} has cutoff {op.cutoff}, state mode has cutoff {expected}")


def apply_on_axis(tensor: np.ndarray, matrix: np.ndarray, axis: int) -> np.ndarray:
    moved = np.tensordot(matrix, tensor, axes=([1], [axis]))
    return np.moveaxis(moved, 0, axis)


def expect(state: FockTensor, ops: Iterable[ModeOp]) -> ComplexExpectation:
    """Expectation of the ordered product ``ops[0] @ ops[1] @ ... @ ops[-1]``.

    The last operator acts on the ket first, so ``[a_1, a_2^dag]`` evaluates
    ``<a_1 a_2^dag>``. Returns ``Tr(rho O)`` for mixed states, ``<psi|O|psi>`` for pure.
    """
    ops = list(ops)
    for op in ops:
        _check_op(state, op)

    out = state.tensor()
    for op in reversed(ops):
        out = apply_on_axis(out, op.matrix, op.mode - 1)

    if state.is_pure:
        value = complex(np.vdot(state.data, out))
    else:
        dim = state.dimension
        value = complex(np.trace(out.reshape(dim, dim)))
    return ComplexExpectation(value)


def loss_kraus_operators(cutoff: int, eta: float) -> np.ndarray:
    """Kraus stack ``K[k, n - k, n] = sqrt(C(n, k)) eta^((n-k)/2) (1-eta)^(k/2)``."""
    dim = cutoff + 1
    kraus = np.zeros((dim, dim, dim))
    for k in range(dim):
        for n in range(k, dim):
            kraus[k, n - k, n] = math.sqrt(comb(n, k, exact=True)) * eta ** ((n - k) / 2) * (1.0 - eta) ** (k / 2)
    return kraus


def apply_loss(state: FockTensor, mode: int, eta: float) -> FockTensor:
    """Pure-loss channel ``a -> sqrt(eta) a + sqrt(1 - eta) v`` on one mode."""
    if not 0.0 <= eta <= 1.0:
        raise ValueError(f"Transmissivity eta must lie in [0, 1], got {eta}")
    check_mode(state, mode)

    n_modes = state.num_modes
    rho = state.as_density().tensor()
    ket_axis, bra_axis = mode - 1, n_modes + mode - 1
    kraus = loss_kraus_operators(state.cutoffs[mode - 1], eta)

    moved = np.moveaxis(rho, (ket_axis, bra_axis), (-2, -1))
    out = np.einsum("kim,...mn,kjn->...ij", kraus, moved, kraus.conj(), optimize=True)
    out = np.moveaxis(out, (-2, -1), (ket_axis, bra_axis))

    dim = state.dimension
    matrix = out.reshape(dim, dim)
    matrix = (matrix + matrix.conj().T) / 2
    return FockTensor(state.cutoffs, "mixed", matrix)


def apply_loss_all(state: FockTensor, eta: float) -> FockTensor:
    out = state
    for mode in range(1, state.num_modes + 1):
        out = apply_loss(out, mode, eta)
    return out


def partial_transpose(state: FockTensor, modes: Iterable[int]) -> FockTensor:
    """Transpose the density operator on ``modes``; the result may be non-positive."""
    subset = sorted({int(m) for m in modes})
    n_modes = state.num_modes
    if not subset:
        raise ValueError("Partial transpose needs a non-empty mode subset")
    for mode in subset:
        check_mode(state, mode)
    if len(subset) == n_modes:
        raise ValueError("Transposing every mode is a global transpose, not a partial one")

    perm = list(range(2 * n_modes))
    for mode in subset:
        perm[mode - 1], perm[n_modes + mode - 1] = perm[n_modes + mode - 1], perm[mode - 1]

    dim = state.dimension
    transposed = np.transpose(state.as_density().tensor(), perm).reshape(dim, dim)
    return FockTensor(state.cutoffs, "mixed", transposed)


def hermitian_eigenvalues(matrix: np.ndarray, lowest_only: bool = False) -> np.ndarray:
    """Ascending eigenvalues of a Hermitian matrix after ``(M + M^dag)/2`` symmetrization."""
    matrix = np.asarray(matrix, dtype=np.complex128)
    scale = max(float(np.linalg.norm(matrix)), 1.0)
    asymmetry = float(np.max(np.abs(matrix - matrix.conj().T)))
    if asymmetry > EIGEN_RTOL * scale:
        raise NonHermitianError(f"Matrix is not Hermitian (max deviation {asymmetry:.3e})")
    hermitian = (matrix + matrix.conj().T) / 2
    if lowest_only:
        return scipy.linalg.eigh(hermitian, eigvals_only=True, subset_by_index=[0, 0])
    return scipy.linalg.eigvalsh(hermitian)


def min_eigenvalue(state: FockTensor) -> float:
    return float(hermitian_eigenvalues(state.density_matrix(), lowest_only=True)[0])


def reduced_density(state: FockTensor, keep: Iterable[int]) -> FockTensor:
    """Partial trace over every mode not in ``keep`` (1-based, order preserved)."""
    keep_modes = sorted({int(m) for m in keep})
    if not keep_modes:
        raise ValueError("reduced_density needs at least one mode to keep")
    for mode in keep_modes:
        check_mode(state, mode)
    n_modes = state.num_modes
    kept_axes = [m - 1 for m in keep_modes]
    cutoffs = tuple(state.cutoffs[a] for a in kept_axes)
    dim = math.prod(c + 1 for c in cutoffs)

    if state.is_pure:
        traced = [a for a in range(n_modes) if a not in kept_axes]
        psi = np.transpose(state.tensor(), kept_axes + traced).reshape(dim, -1)
        matrix = psi @ psi.conj().T
    else:
        ket = list(range(n_modes))
        bra = [n_modes + a if a in kept_axes else a for a in range(n_modes)]
        out = [ket[a] for a in kept_axes] + [bra[a] for a in kept_axes]
        matrix = np.einsum(state.tensor(), ket + bra, out).reshape(dim, dim)

    matrix = (matrix + matrix.conj().T) / 2
    return FockTensor(cutoffs, "mixed", matrix)


def tensor_product(*states: FockTensor) -> FockTensor:
    """Kronecker product; the first argument occupies the slowest modes."""
    if not states:
        raise ValueError("tensor_product needs at least one state")
    cutoffs = tuple(c for s in states for c in s.cutoffs)
    if all(s.is_pure for s in states):
        vector = states[0].data
        for s in states[1:]:
            vector = np.kron(vector, s.data)
        return FockTensor(cutoffs, "pure", vector)
    matrix = states[0].density_matrix()
    for s in states[1:]:
        matrix = np.kron(matrix, s.density_matrix())
    return FockTensor(cutoffs, "mixed", matrix)


def mixture(states: Sequence[FockTensor], weights: Sequence[float]) -> FockTensor:
    """Convex combination of states sharing the same cutoffs."""
    if len(states) != len(weights) or not states:
        raise ValueError("mixture needs one weight per state")
    if any(w < 0 for w in weights) or abs(sum(weights) - 1.0) > NORM_TOL:
        raise ValueError(f"Mixture weights must be non-negative and sum to 1, got {list(weights)}")
    cutoffs = states[0].cutoffs
    if any(s.cutoffs != cutoffs for s in states):
        raise CutoffMismatchError("All mixture components must share the same cutoffs")
    matrix = sum(w * s.density_matrix() for w, s in zip(weights, states, strict=True))
    return FockTensor(cutoffs, "mixed", matrix)


def fock_state(cutoffs: Sequence[int], occupations: Sequence[int]) -> FockTensor:
    cutoffs = tuple(cutoffs)
    if len(occupations) != len(cutoffs):
        raise ValueError(f"Need one occupation per mode, got {list(occupations)} for {len(cutoffs)} modes")
    if any(n < 0 or n > c for n, c in zip(occupations, cutoffs, strict=True)):
        raise InsufficientCutoffError(f"Occupations {list(occupations)} do not fit cutoffs {cutoffs}")
    dims = tuple(c + 1 for c in cutoffs)
    vector = np.zeros(math.prod(dims), dtype=np.complex128)
    vector[np.ravel_multi_index(tuple(occupations), dims)] = 1.0
    return FockTensor(cutoffs, "pure", vector)


def vacuum(cutoffs: Sequence[int]) -> FockTensor:
    return fock_state(cutoffs, [0] * len(cutoffs))
