import math

import numpy as np
import pytest
import scipy.linalg

from cvbell.fock import (
    MAX_DIMENSION,
    CutoffMismatchError,
    DimensionCapError,
    FockTensor,
    InsufficientCutoffError,
    ModeIndexError,
    NonHermitianError,
    annihilate,
    apply_loss,
    apply_loss_all,
    create,
    expect,
    fock_state,
    hermitian_eigenvalues,
    loss_kraus_operators,
    min_eigenvalue,
    mixture,
    number,
    partial_transpose,
    quadrature,
    reduced_density,
    tensor_product,
    vacuum,
    x_quadrature,
    y_quadrature,
)
from cvbell.states import StateSpec, build


def test_ladder_commutator_is_identity_below_cutoff():
    a = annihilate(1, 4).matrix
    adag = create(1, 4).matrix
    commutator = a @ adag - adag @ a
    expected = np.eye(5)
    expected[4, 4] = -4
    np.testing.assert_allclose(commutator, expected, atol=1e-12)


def test_quadratures_recombine_into_annihilator():
    a = annihilate(1, 6).matrix
    x = x_quadrature(1, 6).matrix
    y = y_quadrature(1, 6).matrix
    np.testing.assert_allclose(x + 1j * y, a, atol=1e-15)
    np.testing.assert_allclose(x, x.conj().T, atol=1e-15)
    np.testing.assert_allclose(y, y.conj().T, atol=1e-15)


def test_quadrature_phase_is_rotation_of_x_and_y():
    theta = 0.37
    q = quadrature(1, 5, theta).matrix
    expected = math.cos(theta) * x_quadrature(1, 5).matrix + math.sin(theta) * y_quadrature(1, 5).matrix
    np.testing.assert_allclose(q, expected, atol=1e-14)


def test_pure_state_must_be_normalized():
    with pytest.raises(ValueError, match="not normalized"):
        FockTensor.pure((1,), np.array([1.0, 1.0]))
    state = FockTensor.pure((1,), np.array([1.0, 1.0]), normalize=True)
    assert state.data[0] == pytest.approx(1 / math.sqrt(2))


def test_density_matrix_must_be_hermitian():
    rho = np.array([[0.5, 0.1], [0.0, 0.5]])
    with pytest.raises(NonHermitianError):
        FockTensor.mixed((1,), rho)


def test_dimension_cap_is_enforced():
    side = math.isqrt(MAX_DIMENSION)
    with pytest.raises(DimensionCapError, match="exceeds the cap"):
        FockTensor((side, side), "pure", np.zeros(1))


def test_state_data_is_read_only():
    state = vacuum((2,))
    with pytest.raises(ValueError):
        state.data[0] = 0.5


def test_expect_applies_last_operator_first():
    state = fock_state((2,), (1,))
    a, adag = annihilate(1, 2), create(1, 2)
    assert expect(state, [a, adag]).real == pytest.approx(2.0)
    assert expect(state, [adag, a]).real == pytest.approx(1.0)


def test_expect_cross_mode_moment_on_single_photon():
    theta, phi = math.pi / 4, math.pi / 3
    state = build(StateSpec("single_photon", theta=theta, phi=phi))
    value = expect(state, [annihilate(1, 1), create(2, 1)]).value
    expected = math.sin(theta) * math.cos(theta) * complex(math.cos(phi), math.sin(phi))
    assert value == pytest.approx(expected, abs=1e-12)


def test_expect_matches_between_pure_and_mixed(tmss_half):
    ops = [annihilate(1, tmss_half.cutoffs[0]), annihilate(2, tmss_half.cutoffs[1])]
    pure_value = expect(tmss_half, ops).value
    mixed_value = expect(tmss_half.as_density(), ops).value
    assert mixed_value == pytest.approx(pure_value, abs=1e-12)
    r = 0.5
    assert pure_value.real == pytest.approx(math.sinh(r) * math.cosh(r), abs=1e-10)


def test_expect_rejects_mode_and_cutoff_errors():
    state = vacuum((2, 2))
    with pytest.raises(ModeIndexError):
        expect(state, [number(3, 2)])
    with pytest.raises(CutoffMismatchError):
        expect(state, [number(1, 4)])


def test_loss_kraus_operators_are_trace_preserving():
    kraus = loss_kraus_operators(5, 0.3)
    total = sum(k.T @ k for k in kraus)
    np.testing.assert_allclose(total, np.eye(6), atol=1e-12)


def test_apply_loss_on_single_photon_gives_binomial_diagonal():
    eta = 0.35
    out = apply_loss(fock_state((1,), (1,)), 1, eta)
    np.testing.assert_allclose(out.data, np.diag([1 - eta, eta]), atol=1e-14)


def test_apply_loss_scales_moments(tmss_half):
    eta, r = 0.6, 0.5
    lossy = apply_loss_all(tmss_half, eta)
    c = tmss_half.cutoffs[0]
    n1 = expect(lossy, [number(1, c)]).real
    a1a2 = expect(lossy, [annihilate(1, c), annihilate(2, c)]).real
    assert n1 == pytest.approx(eta * math.sinh(r) ** 2, abs=1e-10)
    assert a1a2 == pytest.approx(eta * math.sinh(r) * math.cosh(r), abs=1e-10)
    assert lossy.is_positive()


@pytest.mark.parametrize("eta", [-0.1, 1.5])
def test_apply_loss_rejects_bad_efficiency(eta):
    with pytest.raises(ValueError, match="eta"):
        apply_loss(vacuum((1,)), 1, eta)


def test_apply_loss_with_unit_efficiency_is_identity(tmss_half):
    out = apply_loss(tmss_half, 2, 1.0)
    np.testing.assert_allclose(out.data, tmss_half.density_matrix(), atol=1e-14)


def test_partial_transpose_of_tmss_has_closed_form_minimum():
    r = 0.2
    state = build(StateSpec("tmss", r=r))
    transposed = partial_transpose(state, [2])
    expected = -math.tanh(r) / math.cosh(r) ** 2
    assert min_eigenvalue(transposed) == pytest.approx(expected, abs=1e-10)
    assert not transposed.is_positive()


def test_partial_transpose_rejects_trivial_subsets():
    state = vacuum((1, 1))
    with pytest.raises(ValueError, match="non-empty"):
        partial_transpose(state, [])
    with pytest.raises(ValueError, match="global transpose"):
        partial_transpose(state, [1, 2])


def test_partial_transpose_of_product_state_stays_positive():
    state = tensor_product(fock_state((2,), (1,)), FockTensor.pure((2,), np.array([1, 1j, 0]), normalize=True))
    assert partial_transpose(state, [1]).is_positive()


def test_hermitian_eigenvalues_reject_asymmetric_matrix():
    with pytest.raises(NonHermitianError):
        hermitian_eigenvalues(np.array([[1.0, 2.0], [0.0, 1.0]]))


def test_hermitian_eigenvalues_lowest_only_matches_full_spectrum(gen):
    m = gen.standard_normal((6, 6)) + 1j * gen.standard_normal((6, 6))
    h = m + m.conj().T
    full = hermitian_eigenvalues(h)
    assert np.all(np.diff(full) >= 0)
    assert hermitian_eigenvalues(h, lowest_only=True)[0] == pytest.approx(full[0])


def test_reduced_density_of_tmss_is_thermal(tmss_half):
    r = 0.5
    t = math.tanh(r)
    marginal = reduced_density(tmss_half, [1])
    n = np.arange(tmss_half.cutoffs[0] + 1)
    np.testing.assert_allclose(marginal.data, np.diag(t ** (2 * n) / math.cosh(r) ** 2), atol=1e-14)


def test_reduced_density_pure_and_mixed_paths_agree():
    state = build(StateSpec("random_pure", modes=3, seed=4))
    for keep in ([1], [2], [1, 3]):
        pure_path = reduced_density(state, keep).data
        mixed_path = reduced_density(state.as_density(), keep).data
        np.testing.assert_allclose(pure_path, mixed_path, atol=1e-13)


def test_tensor_product_puts_first_factor_slowest():
    product = tensor_product(fock_state((1,), (1,)), fock_state((2,), (0,)))
    np.testing.assert_array_equal(product.data, fock_state((1, 2), (1, 0)).data)


def test_mixture_validates_inputs():
    with pytest.raises(ValueError, match="sum to 1"):
        mixture([vacuum((1,)), fock_state((1,), (1,))], [0.7, 0.7])
    with pytest.raises(CutoffMismatchError):
        mixture([vacuum((1,)), vacuum((2,))], [0.5, 0.5])


def test_fock_state_needs_room_for_occupations():
    with pytest.raises(InsufficientCutoffError):
        fock_state((1, 1), (2, 0))


def _squeeze_operator(cutoff: int, r: float) -> np.ndarray:
    a = annihilate(1, cutoff).matrix
    return scipy.linalg.expm(r * (a.T @ a.T - a @ a) / 2)


def test_squeezed_vacuum_matches_closed_form_amplitudes():
    r, cutoff = 0.3, 60
    psi = _squeeze_operator(cutoff, r)[:, 0]
    t = math.tanh(r)
    assert psi[0].real == pytest.approx(1 / math.sqrt(math.cosh(r)), abs=1e-10)
    assert psi[2].real == pytest.approx(t * math.sqrt(2) / 2 / math.sqrt(math.cosh(r)), abs=1e-10)
    assert abs(psi[1]) < 1e-12

    state = FockTensor.pure((cutoff,), psi, normalize=True)
    x = x_quadrature(1, cutoff)
    y = y_quadrature(1, cutoff)
    assert expect(state, [x, x]).real == pytest.approx(math.exp(2 * r) / 4, abs=1e-8)
    assert expect(state, [y, y]).real == pytest.approx(math.exp(-2 * r) / 4, abs=1e-8)


def _random_states(count: int, modes: int = 2, cutoff: int = 2):
    for seed in range(count):
        if seed % 3 == 0:
            yield build(StateSpec("random_pure", modes=modes, seed=seed, cutoff=cutoff))
        else:
            yield build(StateSpec("random_mixed", modes=modes, seed=seed, rank=1 + seed % 4, cutoff=cutoff))


@pytest.mark.parametrize("modes, subset", [(2, [2]), (2, [1]), (3, [1, 3])])
def test_partial_transpose_is_an_involution(modes, subset):
    for state in _random_states(10, modes=modes, cutoff=1 if modes == 3 else 2):
        twice = partial_transpose(partial_transpose(state, subset), subset)
        np.testing.assert_allclose(twice.data, state.density_matrix(), atol=1e-14)


def test_partial_transpose_keeps_trace_and_hermiticity():
    for state in _random_states(60):
        matrix = partial_transpose(state, [2]).data
        assert np.trace(matrix).real == pytest.approx(1.0, abs=1e-12)
        np.testing.assert_allclose(matrix, matrix.conj().T, atol=1e-14)


@pytest.mark.parametrize("eta", [0.2, 0.7])
def test_apply_loss_keeps_random_states_physical(eta):
    for state in _random_states(20):
        lossy = apply_loss(apply_loss(state, 1, eta), 2, 1 - eta / 2)
        assert np.trace(lossy.data).real == pytest.approx(1.0, abs=1e-12)
        assert lossy.is_positive(tol=1e-12)


def test_maximally_mixed_state_has_flat_transposed_spectrum():
    state = FockTensor.mixed((1, 1), np.eye(4) / 4)
    assert min_eigenvalue(partial_transpose(state, [2])) == pytest.approx(0.25, abs=1e-14)
