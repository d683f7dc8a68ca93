"""Constructors for the optical states the inequalities are tested on."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Any, Literal, get_args

import numpy as np

from . import rng
from .fock import (
    MAX_DIMENSION,
    DimensionCapError,
    FockTensor,
    InsufficientCutoffError,
    apply_on_axis,
    fock_state,
    mixture,
    tensor_product,
)

logger = logging.getLogger(__name__)

TAIL_TOL = 1e-12
COEFF_TOL = 1e-10

Variant = Literal[
    "single_photon",
    "tmss",
    "ghz_vacuum",
    "multimode_epr",
    "vacuum",
    "fock",
    "random_pure",
    "random_mixed",
    "random_separable",
]
VARIANTS: tuple[str, ...] = get_args(Variant)

_FIXED_TWO_MODE = {"single_photon", "tmss"}
_DEFAULT_CUTOFF = {
    "single_photon": 1,
    "ghz_vacuum": 1,
    "vacuum": 1,
    "random_pure": 2,
    "random_mixed": 2,
    "random_separable": 2,
}


@dataclass(frozen=True)
class StateSpec:
    """Parameterized description of a state; ``cutoff=None`` picks one automatically.

    Only the fields relevant to ``variant`` are read. ``k`` is the number of modes
    holding the first GHZ branch, not an inequality bipartition.
    """

    variant: Variant
    theta: float = 0.0
    phi: float = 0.0
    r: float = 0.0
    modes: int = 2
    k: int = 1
    c1: complex = 1 / math.sqrt(2)
    c2: complex = 1 / math.sqrt(2)
    p_s: float = 1.0
    occupations: tuple[int, ...] = field(default_factory=tuple)
    seed: int = 0
    rank: int = 1
    terms: int = 2
    cutoff: int | None = None

    def __post_init__(self) -> None:
        if self.variant not in VARIANTS:
            raise ValueError(f"Unknown state variant {self.variant!r}; expected one of {', '.join(VARIANTS)}")
        object.__setattr__(self, "occupations", tuple(int(n) for n in self.occupations))
        object.__setattr__(self, "c1", complex(self.c1))
        object.__setattr__(self, "c2", complex(self.c2))

        if self.r < 0:
            raise ValueError(f"Squeezing r must be >= 0, got {self.r}")
        if not 0.0 <= self.p_s <= 1.0:
            raise ValueError(f"Mixing weight p_s must lie in [0, 1], got {self.p_s}")
        if self.cutoff is not None and self.cutoff < 0:
            raise ValueError(f"Cutoff must be >= 0, got {self.cutoff}")

        if self.variant == "ghz_vacuum":
            norm = abs(self.c1) ** 2 + abs(self.c2) ** 2
            if abs(norm - 1.0) > COEFF_TOL:
                raise ValueError(f"GHZ coefficients must satisfy |c1|^2 + |c2|^2 = 1, got {norm!r}")
            if not 1 <= self.k <= self.modes - 1:
                raise ValueError(f"GHZ partition k must lie in 1..{self.modes - 1}, got {self.k}")
        if self.variant == "multimode_epr" and self.modes < 2:
            raise ValueError(f"multimode_epr needs at least 2 modes, got {self.modes}")
        if self.variant == "fock" and not self.occupations:
            raise ValueError("fock state needs a non-empty occupation list")
        if self.variant in ("vacuum", "random_pure", "random_mixed", "random_separable") and self.modes < 1:
            raise ValueError(f"{self.variant} needs at least 1 mode, got {self.modes}")
        if self.variant == "random_mixed" and self.rank < 1:
            raise ValueError(f"random_mixed rank must be >= 1, got {self.rank}")
        if self.variant == "random_separable" and self.terms < 1:
            raise ValueError(f"random_separable needs at least 1 term, got {self.terms}")
        if self.seed < 0:
            raise ValueError(f"Seed must be >= 0, got {self.seed}")

    @property
    def num_modes(self) -> int:
        if self.variant in _FIXED_TWO_MODE:
            return 2
        if self.variant == "fock":
            return len(self.occupations)
        return self.modes

    def with_params(self, **changes: Any) -> StateSpec:
        return replace(self, **changes)

    def to_dict(self) -> dict[str, Any]:
        data: dict[str, Any] = {"variant": self.variant}
        relevant = _RELEVANT_FIELDS[self.variant]
        for name in relevant:
            value = getattr(self, name)
            if isinstance(value, complex):
                value = [value.real, value.imag]
            elif isinstance(value, tuple):
                value = list(value)
            data[name] = value
        data["cutoff"] = self.cutoff
        return data

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> StateSpec:
        known = set(cls.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"Unknown state fields: {', '.join(sorted(unknown))}")
        return cls(**data)


_RELEVANT_FIELDS: dict[str, tuple[str, ...]] = {
    "single_photon": ("theta", "phi"),
    "tmss": ("r",),
    "ghz_vacuum": ("modes", "k", "c1", "c2", "p_s"),
    "multimode_epr": ("modes", "r"),
    "vacuum": ("modes",),
    "fock": ("occupations",),
    "random_pure": ("modes", "seed"),
    "random_mixed": ("modes", "seed", "rank"),
    "random_separable": ("modes", "seed", "terms"),
}


def tmss_tail(r: float, cutoff: int) -> float:
    """Probability mass of TMSS beyond photon number ``cutoff``: ``tanh(r)^(2(cutoff+1))``."""
    return math.tanh(r) ** (2 * (cutoff + 1))


def required_tmss_cutoff(r: float, tol: float = TAIL_TOL) -> int:
    t = math.tanh(r)
    if t == 0.0:
        return 0
    cutoff = max(math.ceil(math.log(tol) / (2 * math.log(t))) - 1, 0)
    while tmss_tail(r, cutoff) >= tol:
        cutoff += 1
    return cutoff


def _check_dimension(n_modes: int, cutoff: int) -> None:
    dim = (cutoff + 1) ** n_modes
    if dim > MAX_DIMENSION:
        raise DimensionCapError(
            f"{n_modes} modes at cutoff {cutoff} need dimension {dim}, above the cap of {MAX_DIMENSION}"
        )


def _single_photon(spec: StateSpec, cutoff: int) -> FockTensor:
    if cutoff < 1:
        raise InsufficientCutoffError("single_photon needs cutoff >= 1")
    vector = (
        math.cos(spec.theta) * fock_state((cutoff, cutoff), (1, 0)).data
        + math.sin(spec.theta) * np.exp(-1j * spec.phi) * fock_state((cutoff, cutoff), (0, 1)).data
    )
    return FockTensor.pure((cutoff, cutoff), vector)


def _tmss(spec: StateSpec, cutoff: int) -> FockTensor:
    tail = tmss_tail(spec.r, cutoff)
    if tail >= TAIL_TOL:
        raise InsufficientCutoffError(f"tmss(r={spec.r}) at cutoff {cutoff} leaves tail {tail:.3e} >= {TAIL_TOL}")
    t = math.tanh(spec.r)
    dim = cutoff + 1
    amplitudes = np.zeros((dim, dim), dtype=np.complex128)
    n = np.arange(dim)
    amplitudes[n, n] = t**n / math.cosh(spec.r)
    logger.debug("tmss_built", extra={"event": "tmss_built", "cutoff": cutoff, "tail": tail})
    return FockTensor.pure((cutoff, cutoff), amplitudes)


def _ghz_vacuum(spec: StateSpec, cutoff: int) -> FockTensor:
    if cutoff < 1:
        raise InsufficientCutoffError("ghz_vacuum needs cutoff >= 1")
    n, k = spec.modes, spec.k
    cutoffs = (cutoff,) * n
    first = fock_state(cutoffs, [1] * k + [0] * (n - k)).data
    second = fock_state(cutoffs, [0] * k + [1] * (n - k)).data
    ghz = FockTensor.pure(cutoffs, spec.c1 * first + spec.c2 * second)
    vac = fock_state(cutoffs, [0] * n)
    if spec.p_s == 1.0:
        return ghz.as_density()
    return mixture([ghz, vac], [spec.p_s, 1.0 - spec.p_s])


def _random_vector(gen: np.random.Generator, dim: int) -> np.ndarray:
    vector = gen.standard_normal(dim) + 1j * gen.standard_normal(dim)
    return vector / np.linalg.norm(vector)


def _random_pure(spec: StateSpec, cutoff: int) -> FockTensor:
    cutoffs = (cutoff,) * spec.modes
    gen = rng.stream(spec.seed, rng.STATE)
    return FockTensor.pure(cutoffs, _random_vector(gen, math.prod(c + 1 for c in cutoffs)))


def _random_mixed(spec: StateSpec, cutoff: int) -> FockTensor:
    """Ginibre ensemble: rho = G G^dag / Tr(G G^dag) with G of shape (D, rank)."""
    cutoffs = (cutoff,) * spec.modes
    dim = math.prod(c + 1 for c in cutoffs)
    gen = rng.stream(spec.seed, rng.STATE)
    ginibre = gen.standard_normal((dim, spec.rank)) + 1j * gen.standard_normal((dim, spec.rank))
    rho = ginibre @ ginibre.conj().T
    rho = (rho + rho.conj().T) / 2
    return FockTensor.mixed(cutoffs, rho / np.trace(rho).real)


def _random_separable(spec: StateSpec, cutoff: int) -> FockTensor:
    """Dirichlet-weighted mixture of products of random single-mode pure states."""
    gen = rng.stream(spec.seed, rng.STATE)
    weights = gen.dirichlet(np.ones(spec.terms))
    products = [
        tensor_product(*(FockTensor.pure((cutoff,), _random_vector(gen, cutoff + 1)) for _ in range(spec.modes)))
        for _ in range(spec.terms)
    ]
    weights = weights / weights.sum()
    return mixture(products, list(weights))


def epr_network_matrix(n_modes: int) -> np.ndarray:
    """Heisenberg matrix ``a_out = M a_in`` of the symmetric N-splitter cascade.

    Splitter ``j`` couples modes j and j+1 with ``cos(theta_j) = 1/sqrt(N - j + 1)``
    and maps ``a_j -> c a_j + s a_{j+1}``, ``a_{j+1} -> -s a_j + c a_{j+1}``.
    """
    matrix = np.eye(n_modes)
    for j in range(n_modes - 1):
        cos = 1.0 / math.sqrt(n_modes - j)
        sin = math.sqrt(1.0 - cos * cos)
        splitter = np.eye(n_modes)
        splitter[j, j], splitter[j, j + 1] = cos, sin
        splitter[j + 1, j], splitter[j + 1, j + 1] = -sin, cos
        matrix = splitter @ matrix
    return matrix


def epr_network_z_matrix(n_modes: int, r: float) -> np.ndarray:
    """Symmetric ``Z`` with output state proportional to ``exp(a^dag^T Z a^dag / 2)|0>``.

    Inputs: mode 1 squeezed in X (factor ``exp(-tanh(r) a^dag^2 / 2)``), modes 2..N
    squeezed in Y, so ``Z = M diag(-t, t, ..., t) M^T``.
    """
    t = math.tanh(r)
    squeeze = np.full(n_modes, t)
    squeeze[0] = -t
    matrix = epr_network_matrix(n_modes)
    return (matrix * squeeze) @ matrix.T


def gaussian_vacuum_amplitudes(z_matrix: np.ndarray, cutoffs: tuple[int, ...], prefactor: float) -> np.ndarray:
    """Truncated amplitudes of ``prefactor * exp(a^dag^T Z a^dag / 2)|0>``.

    Terms are generated as ``v_m = A v_{m-1} / m`` with ``A = a^dag^T Z a^dag / 2``
    applied through truncated creation operators. Photon numbers never decrease
    along the series, so every retained amplitude is exact.
    """
    n_modes = len(cutoffs)
    dims = tuple(c + 1 for c in cutoffs)
    creators = [np.diag(np.sqrt(np.arange(1, c + 1, dtype=float)), k=-1) for c in cutoffs]

    term = np.zeros(dims, dtype=np.complex128)
    term[(0,) * n_modes] = prefactor
    total = term.copy()
    max_pairs = sum(cutoffs) // 2
    for m in range(1, max_pairs + 1):
        nxt = np.zeros_like(term)
        for j in range(n_modes):
            single = apply_on_axis(term, creators[j], j)
            if z_matrix[j, j] != 0.0:
                nxt += 0.5 * z_matrix[j, j] * apply_on_axis(single, creators[j], j)
            for k in range(j + 1, n_modes):
                if z_matrix[j, k] != 0.0:
                    nxt += z_matrix[j, k] * apply_on_axis(single, creators[k], k)
        term = nxt / m
        if not np.any(term):
            break
        total += term
    return total.reshape(-1)


def _epr_at_cutoff(n_modes: int, r: float, cutoff: int) -> tuple[np.ndarray, float]:
    cutoffs = (cutoff,) * n_modes
    prefactor = math.cosh(r) ** (-n_modes / 2)
    amplitudes = gaussian_vacuum_amplitudes(epr_network_z_matrix(n_modes, r), cutoffs, prefactor)
    tail = max(1.0 - float(np.vdot(amplitudes, amplitudes).real), 0.0)
    return amplitudes, tail


def build_epr_network(n_modes: int, r: float, cutoff: int | None = None) -> FockTensor:
    """Squeezed inputs through the N-splitter cascade; ``n_modes=2`` reproduces tmss(r)."""
    if n_modes < 2:
        raise ValueError(f"The EPR network needs at least 2 modes, got {n_modes}")
    if r < 0:
        raise ValueError(f"Squeezing r must be >= 0, got {r}")

    if cutoff is not None:
        _check_dimension(n_modes, cutoff)
        amplitudes, tail = _epr_at_cutoff(n_modes, r, cutoff)
        if tail >= TAIL_TOL:
            raise InsufficientCutoffError(
                f"multimode_epr(N={n_modes}, r={r}) at cutoff {cutoff} leaves tail {tail:.3e} >= {TAIL_TOL}"
            )
    else:
        cutoff = 1 if r > 0 else 0
        while True:
            _check_dimension(n_modes, cutoff)
            amplitudes, tail = _epr_at_cutoff(n_modes, r, cutoff)
            if tail < TAIL_TOL:
                break
            if (cutoff + 2) ** n_modes > MAX_DIMENSION:
                raise InsufficientCutoffError(
                    f"multimode_epr(N={n_modes}, r={r}) cannot reach tail {TAIL_TOL} within the dimension cap "
                    f"(tail {tail:.3e} at cutoff {cutoff})"
                )
            cutoff += 1

    logger.debug(
        "epr_network_built",
        extra={"event": "epr_network_built", "cutoff": cutoff, "tail": tail, "dimension": amplitudes.size},
    )
    return FockTensor.pure((cutoff,) * n_modes, amplitudes)


def default_cutoff(spec: StateSpec) -> int:
    if spec.variant == "tmss":
        return required_tmss_cutoff(spec.r)
    if spec.variant == "fock":
        return max(max(spec.occupations), 1)
    return _DEFAULT_CUTOFF.get(spec.variant, 1)


def build(spec: StateSpec) -> FockTensor:
    """Materialize ``spec`` on a truncated Fock space."""
    if spec.variant == "multimode_epr":
        return build_epr_network(spec.modes, spec.r, spec.cutoff)

    cutoff = spec.cutoff if spec.cutoff is not None else default_cutoff(spec)
    _check_dimension(spec.num_modes, cutoff)

    if spec.variant == "single_photon":
        state = _single_photon(spec, cutoff)
    elif spec.variant == "tmss":
        state = _tmss(spec, cutoff)
    elif spec.variant == "ghz_vacuum":
        state = _ghz_vacuum(spec, cutoff)
    elif spec.variant == "vacuum":
        state = fock_state((cutoff,) * spec.modes, [0] * spec.modes)
    elif spec.variant == "fock":
        state = fock_state((cutoff,) * len(spec.occupations), spec.occupations)
    elif spec.variant == "random_pure":
        state = _random_pure(spec, cutoff)
    elif spec.variant == "random_mixed":
        state = _random_mixed(spec, cutoff)
    else:
        state = _random_separable(spec, cutoff)

    logger.debug(
        "state_built",
        extra={"event": "state_built", "variant": spec.variant, "cutoff": cutoff, "dimension": state.dimension},
    )
    return state
