import logging
import math

import numpy as np
import pytest
from scipy import stats

from cvbell.fock import apply_loss_all, fock_state, reduced_density, vacuum
from cvbell.sampling import (
    CSV_COLUMNS,
    SETTING_COUNT,
    SETTING_OTHER,
    SETTING_X,
    SETTING_Y,
    GridOverflowError,
    GridPdf,
    InsufficientSamplesError,
    RunningMoments,
    SampleBatch,
    SamplingPlan,
    attenuate_quadratures,
    cell_ingredients,
    draw_counts,
    estimate_ingredients,
    finalize,
    grid_centers,
    lhs_estimate,
    marginal_pdf,
    oscillator_functions,
    quadrature_pdf,
    rhs_estimate,
    sample_all_settings,
    sample_counts,
    sample_quadrature,
    sampled_reports,
    setting_code,
)
from cvbell.states import StateSpec, build

GRID = 256
R = 0.5


def _sinh_cosh(r: float = R) -> tuple[float, float]:
    return math.sinh(r), math.cosh(r)


def test_setting_codes():
    assert setting_code(0.0) == SETTING_X
    assert setting_code(math.pi / 2) == SETTING_Y
    assert setting_code(0.3) == SETTING_OTHER


def test_oscillator_functions_are_orthonormal():
    x = np.linspace(-8, 8, 4001)
    dx = x[1] - x[0]
    basis = oscillator_functions(10, x)
    np.testing.assert_allclose(basis @ basis.T * dx, np.eye(11), atol=1e-9)


def test_vacuum_quadrature_variance():
    pdf = quadrature_pdf(vacuum((4,)), (0.0,), grid_points=512)
    assert pdf.moment(1) == pytest.approx(0.0, abs=1e-12)
    assert pdf.moment(2) == pytest.approx(0.25, abs=1e-8)


def test_narrow_grid_is_widened_then_overflows(caplog):
    with caplog.at_level(logging.WARNING, logger="cvbell.sampling"):
        with pytest.raises(GridOverflowError, match="misses mass"):
            quadrature_pdf(vacuum((1,)), (0.0,), grid_points=256, half_width=1.0)
    assert any(record.message == "grid_widened" for record in caplog.records)


def test_quadrature_pdf_validation(ghz_three, tmss_half):
    with pytest.raises(ValueError, match="limited to 2 modes"):
        quadrature_pdf(ghz_three, (0.0, 0.0, 0.0))
    with pytest.raises(ValueError, match="one phase per mode"):
        quadrature_pdf(tmss_half, (0.0,))
    with pytest.raises(ValueError, match="grid_points"):
        quadrature_pdf(tmss_half, (0.0, 0.0), grid_points=1)


def test_tmss_joint_pdf_moments(tmss_half):
    s, c = _sinh_cosh()
    xx = quadrature_pdf(tmss_half, (0.0, 0.0), grid_points=GRID)
    yy = quadrature_pdf(tmss_half, (math.pi / 2, math.pi / 2), grid_points=GRID)
    assert xx.moment(1, 1) == pytest.approx(s * c / 2, abs=1e-6)
    assert yy.moment(1, 1) == pytest.approx(-s * c / 2, abs=1e-6)
    assert xx.moment(2, 0) == pytest.approx(math.cosh(2 * R) / 4, abs=1e-6)


def test_mixed_state_pdf_matches_pure(tmss_half):
    pure = quadrature_pdf(tmss_half, (0.0, math.pi / 2), grid_points=128)
    mixed = quadrature_pdf(tmss_half.as_density(), (0.0, math.pi / 2), grid_points=128)
    np.testing.assert_allclose(mixed.probabilities, pure.probabilities, atol=1e-10)


def test_marginal_of_tmss_is_thermal(tmss_half):
    pdf = marginal_pdf(tmss_half, 2, math.pi / 2, grid_points=GRID)
    assert pdf.moment(2) == pytest.approx(math.cosh(2 * R) / 4, abs=1e-6)


def test_tmss_counts_follow_thermal_statistics(tmss_half):
    trials = 20_000
    batch = sample_counts(tmss_half, 1.0, trials, seed=3)
    counts = batch.outcomes.astype(int)
    assert np.array_equal(counts[:, 0], counts[:, 1])

    t = math.tanh(R)
    probs = np.array([t ** (2 * n) / math.cosh(R) ** 2 for n in range(5)])
    probs = np.append(probs, 1.0 - probs.sum())
    observed = np.bincount(np.minimum(counts[:, 0], 5), minlength=6)
    result = stats.chisquare(observed, trials * probs)
    assert result.pvalue > 1e-3


def test_binomial_thinning_of_fock_state():
    eta, trials = 0.4, 100_000
    counts = draw_counts(fock_state((5,), (3,)), eta, trials, np.random.default_rng(8))[:, 0]
    empirical = np.bincount(counts, minlength=4) / trials
    expected = stats.binom.pmf(np.arange(4), 3, eta)
    assert 0.5 * np.abs(empirical - expected).sum() < 0.01


def test_draw_counts_rejects_bad_arguments():
    with pytest.raises(ValueError, match="eta"):
        draw_counts(vacuum((1,)), 1.2, 10, np.random.default_rng(0))
    with pytest.raises(ValueError, match="at least one trial"):
        draw_counts(vacuum((1,)), 1.0, 0, np.random.default_rng(0))


def test_sampling_is_deterministic_per_seed_and_stream(tmss_half):
    pdf = quadrature_pdf(tmss_half, (0.0, 0.0), grid_points=GRID)
    first = sample_quadrature(pdf, 200, seed=5, stream=(1,))
    again = sample_quadrature(pdf, 200, seed=5, stream=(1,))
    other = sample_quadrature(pdf, 200, seed=5, stream=(2,))
    np.testing.assert_array_equal(first.outcomes, again.outcomes)
    assert not np.array_equal(first.outcomes, other.outcomes)


def test_homodyne_loss_adds_vacuum_noise():
    eta, trials = 0.5, 200_000
    signal_variance = math.cosh(2 * R) / 4
    gen = np.random.default_rng(21)
    outcomes = gen.normal(0.0, math.sqrt(signal_variance), trials)
    lossy = attenuate_quadratures(outcomes, eta, gen)
    assert lossy.var() == pytest.approx(eta * signal_variance + (1 - eta) * 0.25, rel=0.02)
    assert attenuate_quadratures(outcomes, 1.0, gen) is outcomes


def test_running_moments_merge_matches_single_pass(gen):
    values = gen.normal(1.0, 2.0, 1000)
    left, right, whole = RunningMoments(), RunningMoments(), RunningMoments()
    left.add(values[:300])
    right.add(values[300:])
    whole.add(values)
    merged = left.merge(right)
    assert merged.n == 1000
    assert merged.mean == pytest.approx(whole.mean)
    assert merged.variance == pytest.approx(np.var(values, ddof=1))
    assert merged.standard_error == pytest.approx(np.std(values, ddof=1) / math.sqrt(1000))


def test_running_moments_empty_is_nan():
    empty = RunningMoments()
    assert math.isnan(empty.mean)
    assert math.isnan(empty.standard_error)


def test_finalize_reports_missing_ingredients():
    with pytest.raises(InsufficientSamplesError, match="xx"):
        finalize({})


def test_cell_ingredients_separate_correlators_from_marginals():
    assert cell_ingredients((SETTING_X, SETTING_X)) == ("xx", "x1sq", "x2sq")
    assert "n1n2" in cell_ingredients((SETTING_COUNT, SETTING_COUNT))
    mixed = cell_ingredients((SETTING_X, SETTING_COUNT))
    assert mixed == ("x1sq", "n2", "n2_detected", "d2")


class TestSampleBatch:
    def _batch(self, **overrides):
        values = {
            "settings": [[SETTING_COUNT, SETTING_X]],
            "thetas": [[math.nan, 0.0]],
            "outcomes": [[2, 0.31]],
            "detected": [[True, True]],
            "seed": 1,
        }
        values.update(overrides)
        return SampleBatch(**values)

    def test_valid_batch(self):
        batch = self._batch()
        assert batch.trials == 1
        assert batch.n_modes == 2

    def test_rejects_shape_mismatch(self):
        with pytest.raises(ValueError, match="outcomes shape"):
            self._batch(outcomes=[[1.0]])

    def test_rejects_fractional_counts(self):
        with pytest.raises(ValueError, match="non-negative integers"):
            self._batch(outcomes=[[1.5, 0.3]])

    def test_rejects_undetected_homodyne(self):
        with pytest.raises(ValueError, match="Only counting"):
            self._batch(detected=[[True, False]])

    def test_undetected_count_must_be_zero(self):
        with pytest.raises(ValueError, match="recorded as 0"):
            self._batch(detected=[[False, True]])
        assert self._batch(outcomes=[[0, 0.31]], detected=[[False, True]]).detected.tolist() == [[False, True]]

    def test_csv_rows(self):
        rows = list(self._batch().csv_rows(start=10))
        assert len(rows[0]) == len(CSV_COLUMNS)
        assert rows == [[10, "N", "X", "2", "0.31", 1, 1]]

    def test_single_mode_rows_leave_second_mode_blank(self, tmss_half):
        pdf = marginal_pdf(tmss_half, 1, 0.3, grid_points=64)
        row = next(sample_quadrature(pdf, 3, seed=0).csv_rows())
        assert row[1] == "Q(0.3)"
        assert row[2] == row[4] == row[6] == ""


def test_sampled_ingredients_match_closed_forms(tmss_half):
    s, c = _sinh_cosh()
    plan = SamplingPlan(trials=20_000, grid_points=GRID, seed=11)
    ingredients = estimate_ingredients(sample_all_settings(tmss_half, plan))
    expected = {
        "xx": s * c / 2,
        "yy": -s * c / 2,
        "xy": 0.0,
        "yx": 0.0,
        "n1": s**2,
        "n2": s**2,
        "n1n2": 2 * s**4 + s**2,
    }
    for name, value in expected.items():
        est = ingredients[name]
        assert est.n == 20_000
        assert abs(est.mean - value) < 5 * est.se, f"{name}: {est.mean} vs {value} (se {est.se})"

    lhs, lhs_se = lhs_estimate("second", ingredients)
    assert abs(lhs - (s * c) ** 2) < 5 * lhs_se


def test_sampled_reports_reach_analytic_verdicts(tmss_half):
    plan = SamplingPlan(trials=20_000, grid_points=GRID, seed=4)
    first, second = sampled_reports(estimate_ingredients(sample_all_settings(tmss_half, plan)))
    assert second.violated
    assert second.sigma > 5
    assert not first.violated
    assert second.to_dict()["source"]["kind"] == "sampled"


def test_standard_error_shrinks_as_inverse_root_n(tmss_half):
    pdf = quadrature_pdf(tmss_half, (0.0, 0.0), grid_points=GRID)
    sizes = [1_000, 10_000, 100_000]
    errors = []
    for n in sizes:
        outcomes = sample_quadrature(pdf, n, seed=9, stream=(n,)).outcomes
        moments = RunningMoments()
        moments.add(outcomes[:, 0] * outcomes[:, 1])
        errors.append(moments.standard_error)
    slope = np.polyfit(np.log(sizes), np.log(errors), 1)[0]
    assert slope == pytest.approx(-0.5, abs=0.1)


def test_sample_counts_rejects_three_modes(ghz_three):
    with pytest.raises(ValueError, match="at most 2 modes"):
        sample_counts(ghz_three, 1.0, 10, seed=0)


def test_single_photon_quadrature_variance():
    pdf = quadrature_pdf(fock_state((3,), (1,)), (0.0,), grid_points=512)
    assert pdf.moment(2) == pytest.approx(0.75, abs=1e-6)


def test_point_mass_pdf_samples_stay_in_cell():
    grid = grid_centers(8, 1.0)
    probs = np.zeros(8)
    probs[5] = 1.0
    pdf = GridPdf(grid, probs, (0.0,), 1.0)
    outcomes = sample_quadrature(pdf, 1_000, seed=2).outcomes[:, 0]
    half_cell = pdf.cell_width / 2
    assert np.all(np.abs(outcomes - grid[5]) <= half_cell)


def test_fock_counts_and_thinning():
    state = build(StateSpec("fock", occupations=(1, 1)))
    exact = sample_counts(state, 1.0, 500, seed=1)
    assert np.all(exact.outcomes == 1)

    eta = 0.6
    thinned = RunningMoments()
    thinned.add(sample_counts(state, eta, 50_000, seed=1).outcomes[:, 0])
    assert abs(thinned.mean - eta) < 5 * thinned.standard_error


def test_thinned_counts_match_loss_channel(tmss_half):
    eta, trials = 0.5, 100_000
    counts = sample_counts(tmss_half, eta, trials, seed=12).outcomes[:, 0].astype(int)
    diagonal = np.diag(reduced_density(apply_loss_all(tmss_half, eta), [1]).data).real
    empirical = np.bincount(counts, minlength=diagonal.size) / trials
    assert 0.5 * np.abs(empirical - diagonal).sum() < 0.01


def test_vacuum_ingredients_vanish():
    state = build(StateSpec("vacuum", modes=2))
    ingredients = estimate_ingredients(sample_all_settings(state, SamplingPlan(trials=5_000, grid_points=GRID)))
    for name in ("xx", "yy", "xy", "yx", "n1", "n2", "n1n2"):
        est = ingredients[name]
        assert abs(est.mean) <= 5 * est.se, name


def test_single_photon_reconstruction(single_photon_quarter):
    plan = SamplingPlan(trials=20_000, grid_points=GRID, seed=6)
    ingredients = estimate_ingredients(sample_all_settings(single_photon_quarter, plan))
    lhs, lhs_se = lhs_estimate("first", ingredients)
    rhs, rhs_se = rhs_estimate("first", ingredients)
    assert abs(lhs - 0.25) < 5 * lhs_se
    assert rhs == 0.0
    assert rhs_se == 0.0
