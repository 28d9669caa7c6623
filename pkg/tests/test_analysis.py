import cmath
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import closed_form_grid
from wstate.analysis import (STATED_OPTIMA, WTarget, closed_form_exact, closed_form_probability,
                             conditional_fidelity, contamination_estimate, design_w_class,
                             fidelity, fidelity_hessian, grid_probabilities,
                             optimize_probability, perturbed_fidelity, scan_fidelity,
                             simulated_probability, stated_hessian, w_h, w_v, yield_report,
                             YieldModel)
from wstate.fock import RegistryError, make_registry, random_state
from wstate.postselection import DetectorModel, postselect, trigger_select
from wstate.schemes import SchemeParams, build

SIGNAL_REG = make_registry(["2", "3", "3'"])


def test_fidelity_basics():
    assert fidelity(w_v(), w_v()) == pytest.approx(1, abs=1e-15)
    assert fidelity(w_h(), WTarget.equal()) == 0
    cond = trigger_select(postselect(build("I")), "D1V").conditional
    assert fidelity(cond, WTarget.equal()) == pytest.approx(1, abs=1e-12)


def test_fidelity_registry_mismatch():
    stray = random_state(make_registry(["7"]), 3, 2, np.random.default_rng(1))
    with pytest.raises(RegistryError):
        fidelity(stray, w_v())


def test_fidelity_symmetric_and_phase_invariant(rng):
    for _ in range(20):
        a = random_state(SIGNAL_REG, 3, 4, rng)
        b = random_state(SIGNAL_REG, 3, 4, rng)
        f = fidelity(a, b)
        assert abs(f - fidelity(b, a)) < 1e-12
        ph = cmath.exp(1j * rng.uniform(0, 2 * math.pi))
        assert abs(f - fidelity(ph * a, b)) < 1e-12
        assert abs(f - fidelity(a, ph * b)) < 1e-12


@pytest.mark.parametrize("scheme,r2,expected", [
    ("I", {1: 0.25, 2: 1 / 3, 3: 0.5}, 3 / 32),
    ("II", {1: 0.5, 2: 0.5, 3: 0.5}, 3 / 32),
    ("I", {1: 0.5, 2: 0.5, 3: 0.5}, 3 / 64),
    ("SPS", {2: 0.5, 3: 0.5}, 3 / 32),
])
def test_closed_forms(scheme, r2, expected):
    assert closed_form_probability(scheme, SchemeParams(r2)) == pytest.approx(expected, abs=1e-15)
    assert simulated_probability(scheme, SchemeParams(r2)) == pytest.approx(expected, abs=1e-12)


def test_closed_form_exact_rationals():
    assert closed_form_exact("I", {1: Fraction(1, 4), 2: Fraction(1, 3), 3: Fraction(1, 2)}) \
        == Fraction(3, 32)
    assert closed_form_exact("SPS", {2: Fraction(1, 3), 3: Fraction(1, 2)}) == Fraction(1, 9)


def test_closed_form_rejects_perturbation():
    with pytest.raises(ValueError):
        closed_form_probability("I", SchemeParams({1: 0.25, 2: 0.3, 3: 0.5},
                                                  delta={(2, "H"): 0.01}))


@pytest.mark.parametrize("scheme", ["I", "II"])
def test_optimizer_hits_stated_optimum(scheme, optimized):
    res = optimized(scheme)
    value, r2 = STATED_OPTIMA[scheme]
    assert abs(res.best_value - value) < 1e-6
    assert max(abs(a - r2[k]) for a, k in zip(res.best_r2, (1, 2, 3))) < 1e-5
    assert res.to_json()["matches_paper"]
    assert abs(simulated_probability(scheme, res.best_params) - res.best_value) < 1e-10
    _, grid = closed_form_grid(scheme, 1 / 240)
    assert res.best_value <= grid.max() + 1e-9


def test_sps_optimum_exceeds_stated_value():
    res = optimize_probability("SPS")
    assert res.best_value == pytest.approx(1 / 9, abs=1e-9)
    assert res.best_r2 == pytest.approx((1 / 3, 1 / 2), abs=1e-5)
    report = res.to_json()
    assert report["matches_paper"] is False
    assert report["paper_claim"]["value"] == 3 / 32


def test_optimizer_bounds():
    res = optimize_probability("SPS", [(0.4, 0.6), (0.5, 0.5)])
    assert res.best_r2[1] == 0.5
    assert 0.4 <= res.best_r2[0] <= 0.6
    assert res.best_r2[0] == pytest.approx(0.4, abs=1e-6)
    with pytest.raises(ValueError):
        optimize_probability("SPS", [(0.6, 0.4), (0, 1)])


def test_optimizer_is_deterministic():
    a = optimize_probability("SPS", resolution=16)
    b = optimize_probability("SPS", resolution=16)
    assert a.best_r2 == b.best_r2 and a.best_value == b.best_value


def test_grid_path_matches_sequential_simulator(rng):
    axes = [np.array(sorted(rng.uniform(0.05, 0.95, 3))) for _ in range(3)]
    grid = grid_probabilities("II", axes)
    for i, j, k in [(0, 1, 2), (2, 2, 0), (1, 0, 1)]:
        p = SchemeParams({1: axes[0][i], 2: axes[1][j], 3: axes[2][k]})
        assert abs(grid[i, j, k] - simulated_probability("II", p)) < 1e-12


def test_hessian_scheme_I():
    h = fidelity_hessian("I")
    assert np.allclose(np.diag(h), [0, -27 / 12, -16 / 12], atol=1e-3)
    assert abs(h[1, 2]) < 2e-3 and abs(h[0, 1]) < 2e-3 and abs(h[0, 2]) < 2e-3


def test_hessian_scheme_II():
    h = fidelity_hessian("II")
    assert np.allclose(h, stated_hessian("II"), atol=1e-3)
    assert h[0, 0] == pytest.approx(-16 / 9, abs=1e-3)
    assert h[0, 1] == pytest.approx(-8 / 9, abs=1e-3)


@pytest.mark.parametrize("policy", ["d1h", "both"])
@pytest.mark.parametrize("scheme", ["I", "II"])
def test_hessian_other_trigger_policies(scheme, policy):
    assert np.allclose(fidelity_hessian(scheme, policy), stated_hessian(scheme), atol=1e-3)


@pytest.mark.parametrize("scheme", ["I", "II"])
def test_hessian_depends_only_on_difference(scheme):
    one_sided = fidelity_hessian(scheme, probe="one_sided")
    assert np.allclose(one_sided, stated_hessian(scheme), atol=1e-3)


def test_hessian_step_guard():
    with pytest.raises(ValueError):
        fidelity_hessian("I", h=1e-6)


@pytest.mark.parametrize("d1", [-0.1, -0.03, 0.05, 0.1])
def test_delta1_does_not_affect_scheme_I(d1):
    assert perturbed_fidelity("I", {1: d1}) == pytest.approx(1, abs=1e-12)


def test_scan_fit_recovers_quadratic_coefficient():
    rows, fit = scan_fidelity("I", {2: (-0.05, 0.05)}, 0.01)
    assert len(rows) == 11
    assert fit[(2, 2)] == pytest.approx(-27 / 24, abs=1e-3)


def test_scan_delta1_only_and_zero_range():
    rows, _ = scan_fidelity("I", {1: (-0.05, 0.05)}, 0.025)
    assert all(abs(r[3] - 1) < 1e-12 for r in rows)
    rows, fit = scan_fidelity("I", {}, 0.01)
    assert len(rows) == 1 and rows[0][3] == pytest.approx(1, abs=1e-12) and not fit


def test_scan_marks_infeasible_points():
    rows, _ = scan_fidelity("II", {3: (0.9, 1.1)}, 0.1)
    assert math.isnan(rows[-1][3]) and math.isfinite(rows[0][3])


# -- design ----------------------------------------------------------------------

def test_design_eq14_target():
    target = WTarget.from_values([math.sqrt(2 / 3), -1 / math.sqrt(6), -1 / math.sqrt(6)])
    d = design_w_class(target)
    assert d.attenuation[("2", "V")] == pytest.approx(0.5, abs=1e-12)
    assert d.attenuation[("3", "V")] == pytest.approx(0.5, abs=1e-12)
    assert d.attenuation[("3'", "V")] == 1.0
    assert all(d.attenuation[(s, "H")] == 1.0 for s in ("2", "3", "3'"))
    assert d.phases == {"2": pytest.approx(math.pi), "3": pytest.approx(math.pi), "3'": 0.0}
    fid, prob = d.verify()
    assert fid >= 1 - 1e-9
    assert prob == pytest.approx(d.predicted_probability, abs=1e-12)


def test_design_equal_weight_is_identity():
    d = design_w_class(WTarget.equal())
    assert set(d.attenuation.values()) == {1.0}
    assert set(d.phases.values()) == {0.0}


def test_design_product_state_limit():
    d = design_w_class(WTarget((1, 0, 0)))
    assert d.attenuation[("2", "V")] == 0 and d.attenuation[("3", "V")] == 0
    fid, _ = d.verify()
    assert fid == pytest.approx(1, abs=1e-12)


def test_design_random_targets(rng):
    for scheme in ("I", "II", "SPS"):
        for _ in range(20 if scheme == "I" else 4):
            z = rng.normal(size=3) + 1j * rng.normal(size=3)
            d = design_w_class(WTarget.from_values(z), scheme)
            fid, prob = d.verify()
            assert fid >= 1 - 1e-9
            assert prob == pytest.approx(d.predicted_probability, rel=1e-10)


def test_design_rejects_zero_target():
    with pytest.raises(ValueError):
        WTarget.from_values([0, 0, 0])


# -- yields ----------------------------------------------------------------------

def test_yield_report_values():
    rep = yield_report(YieldModel())
    assert rep["ghz_ratio"] == 0.25
    assert rep["sps_three_photon_rate"] == 0.064
    assert rep["stimulated_gain"] == 16
    assert rep["pdc_four_photon_rate"] == pytest.approx(1e-8)
    assert rep["sps_w_rate"] == pytest.approx(0.064 * 3 / 32)


def test_contamination_ideal_detectors():
    rep = contamination_estimate("I", YieldModel(gamma=1e-4), DetectorModel(1.0, True))
    assert rep["ratio"] == 0
    assert rep["pair_weight_ratio"] == pytest.approx(1e-4, rel=1e-12)


# frozen from the binomial loss oracle (tests/oracles.py) with 2 and 3 pairs at eta = 0.6:
# 1e-4 * 0.09066937499999994 / 0.012149999999999996
THRESHOLD_RATIO_ETA_06 = 7.4625e-4


def test_contamination_threshold_detectors():
    rep = contamination_estimate("I", YieldModel(gamma=1e-4), DetectorModel(0.6, False))
    assert rep["ratio"] > 0
    assert rep["ratio"] == pytest.approx(THRESHOLD_RATIO_ETA_06, rel=1e-9)


@pytest.mark.parametrize("gamma,eta", [(0.0, 0.5), (0.2, 0.5), (1e-4, 0.0)])
def test_contamination_range_checks(gamma, eta):
    with pytest.raises(ValueError):
        contamination_estimate("I", YieldModel(gamma=gamma), DetectorModel(eta, False))
