import math

import numpy as np
import pytest

from cvbell.fock import NumericalError
from cvbell.inequalities import evaluate
from cvbell.npt import PT_TOL, pt_moment_check, pt_report, second_group
from cvbell.states import StateSpec, build


def test_second_group_bounds():
    assert second_group(4, 1) == (2, 3, 4)
    assert second_group(4, 3) == (4,)
    with pytest.raises(ValueError, match="Bipartition k"):
        second_group(2, 2)


def test_tmss_schmidt_spectrum(tmss_half):
    r = 0.5
    report = pt_report(tmss_half, [2])
    assert report.method == "schmidt"
    assert report.min_eig == pytest.approx(-math.tanh(r) / math.cosh(r) ** 2, abs=1e-12)
    assert report.is_npt

    s = math.tanh(r) ** np.arange(tmss_half.cutoffs[0] + 1) / math.cosh(r)
    expected_negativity = (s.sum() ** 2 - (s**2).sum()) / 2
    assert report.negativity == pytest.approx(expected_negativity, abs=1e-8)


def test_schmidt_and_dense_paths_agree():
    states = [build(StateSpec("tmss", r=0.2))] + [
        build(StateSpec("random_pure", modes=3, seed=seed)) for seed in range(5)
    ]
    for state in states:
        for subset in ([state.num_modes], [1]):
            fast = pt_report(state, subset)
            dense = pt_report(state, subset, method="dense")
            assert fast.method == "schmidt"
            assert dense.method == "dense"
            assert fast.min_eig == pytest.approx(dense.min_eig, abs=1e-10)
            assert fast.negativity == pytest.approx(dense.negativity, abs=1e-9)


def test_vacuum_and_product_states_are_ppt():
    assert not pt_report(build(StateSpec("vacuum", modes=2)), [2]).is_npt
    report = pt_report(build(StateSpec("fock", occupations=(1, 2))), [2], method="dense")
    assert not report.is_npt
    assert report.negativity == 0.0


def test_separable_mixtures_are_ppt():
    for seed in range(25):
        state = build(StateSpec("random_separable", modes=2, seed=seed, terms=4))
        report = pt_report(state, [2])
        assert report.method == "dense"
        assert report.min_eig > -PT_TOL


def test_ghz_vacuum_is_npt_across_both_cuts(ghz_three):
    for k in (1, 2):
        assert pt_report(ghz_three, second_group(3, k)).is_npt


def test_pt_report_validation(tmss_half, ghz_three):
    with pytest.raises(ValueError, match="non-empty"):
        pt_report(tmss_half, [])
    with pytest.raises(ValueError, match="global transpose"):
        pt_report(tmss_half, [1, 2])
    with pytest.raises(ValueError, match="needs a pure state"):
        pt_report(ghz_three, [2], method="schmidt")


def test_report_is_labeled_as_extension(tmss_half):
    record = pt_report(tmss_half, [2]).to_dict()
    assert record["extension"] == ["negativity"]
    assert record["partition"] == [2]


@pytest.mark.parametrize("family", ["first", "second"])
def test_pt_rule_reproduces_direct_gap(family, single_photon_quarter, tmss_half, ghz_three):
    cases = [(single_photon_quarter, 1), (tmss_half, 1), (ghz_three, 1), (ghz_three, 2)]
    cases += [(build(StateSpec("random_mixed", modes=2, seed=seed, rank=2)), 1) for seed in range(10)]
    for state, k in cases:
        direct = evaluate(state, family, k)
        assert pt_moment_check(state, family, k) == pytest.approx(direct.rhs - direct.lhs, abs=1e-9)


@pytest.mark.parametrize("family", ["first", "second"])
@pytest.mark.parametrize("modes, cutoff", [(2, 2), (3, 1), (4, 1)])
def test_pt_rule_holds_on_random_states_for_every_partition(family, modes, cutoff):
    for seed in range(15):
        if seed % 3 == 0:
            state = build(StateSpec("random_pure", modes=modes, seed=seed, cutoff=cutoff))
        else:
            state = build(StateSpec("random_mixed", modes=modes, seed=seed, rank=1 + seed % 3, cutoff=cutoff))
        for k in range(1, modes):
            direct = evaluate(state, family, k)
            assert pt_moment_check(state, family, k) == pytest.approx(direct.rhs - direct.lhs, abs=1e-9)


def test_pt_rule_rejects_unknown_family(tmss_half):
    with pytest.raises(ValueError, match="Unknown inequality family"):
        pt_moment_check(tmss_half, "third")


def test_numerical_error_is_arithmetic():
    assert issubclass(NumericalError, ArithmeticError)
