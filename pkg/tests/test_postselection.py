import itertools
import math

import numpy as np
import pytest

from oracles import binomial_detection_probability, substitute
from wstate.analysis import fidelity, w_h, w_v
from wstate.fock import ModeLabel, make_registry, random_state, vacuum
from wstate.postselection import (ONE_ANY, VACUUM, Counts, DetectionPattern, DetectorModel,
                                  Exactly, PostselectionResult, postselect, project,
                                  threshold_outcome_probability, trigger_select)
from wstate.schemes import PerturbationSpec, SchemeParams, build, pdc_source_npairs

FOUR = DetectionPattern.one_per_mode(["1", "2", "3", "3'"])


def test_scheme_I_optimum():
    assert postselect(build("I")).probability == pytest.approx(0.09375, abs=1e-12)


def test_vacuum_pattern():
    reg = make_registry(["a"])
    res = project(vacuum(reg), DetectionPattern({"a": VACUUM}))
    assert res.probability == 1 and res.conditional == vacuum(reg)


def test_zero_probability_is_tagged_not_raised():
    res = postselect(build("I", SchemeParams({1: 0.0, 2: 1 / 3, 3: 0.5})))
    assert res.probability == 0 and res.empty
    assert trigger_select(res, "D1V").empty


def test_pattern_needs_a_constraint():
    with pytest.raises(ValueError):
        DetectionPattern({"1": "unconstrained"})


def test_pattern_json():
    p = DetectionPattern.from_json({"1": "one_any", "3p": "one_any", "2": "exactly:1:H"})
    assert p.constraints["3'"] == ONE_ANY and p.constraints["2"] == Exactly(1, "H")
    assert DetectionPattern.from_json(p.to_json()) == p


def test_trigger_branches():
    res = postselect(build("I"))
    v = trigger_select(res, "D1V")
    assert v.probability == pytest.approx(3 / 64, abs=1e-12)
    assert fidelity(v.conditional, w_v()) == pytest.approx(1, abs=1e-12)
    h = trigger_select(res, "D1H", rotate_on_H=True)
    assert fidelity(h.conditional, w_v()) == pytest.approx(1, abs=1e-12)
    raw = trigger_select(res, "D1H", rotate_on_H=False)
    assert fidelity(raw.conditional, w_h()) == pytest.approx(1, abs=1e-12)
    assert fidelity(raw.conditional, w_v()) == pytest.approx(0, abs=1e-12)


def test_trigger_mode_absent():
    res = postselect(build("SPS"))
    with pytest.raises(Exception):
        trigger_select(res, "D1V")


def test_trigger_probabilities_add_up(rng):
    for _ in range(10):
        deltas = {k: float(rng.uniform(-0.1, 0.1)) for k in (1, 2, 3)}
        p = PerturbationSpec.symmetric("I", deltas).params()
        res = postselect(build("I", p))
        tot = trigger_select(res, "D1V").probability + trigger_select(res, "D1H").probability
        assert abs(tot - res.probability) < 1e-12


def test_delta1_keeps_d1v_state_exact(rng):
    for _ in range(10):
        d1 = {(1, "H"): float(rng.uniform(-0.2, 0.2)), (1, "V"): float(rng.uniform(-0.2, 0.2))}
        p = SchemeParams({1: 0.25, 2: 1 / 3, 3: 0.5}, delta=d1)
        sel = trigger_select(postselect(build("I", p)), "D1V")
        assert fidelity(sel.conditional, w_v()) == pytest.approx(1, abs=1e-12)


def test_projection_idempotent(rng):
    out = build("II", SchemeParams({1: 0.3, 2: 0.6, 3: 0.45})).run()
    once = project(out, FOUR)
    twice = project(once.conditional, FOUR)
    assert twice.probability == pytest.approx(1, abs=1e-12)
    a, b = twice.conditional, once.conditional
    assert set(a.terms) == set(b.terms)
    assert max(abs(a.terms[k] - b.terms[k]) for k in a.terms) < 1e-14


def test_completeness_over_exhaustive_patterns(rng):
    spatials = ["a", "b", "c"]
    reg = make_registry(spatials)
    for _ in range(5):
        state = random_state(reg, 4, 12, rng)
        total = 0.0
        for occ in itertools.product(range(5), repeat=6):
            if sum(occ) != 4:
                continue
            pattern = DetectionPattern({s: Counts(occ[2 * i], occ[2 * i + 1])
                                        for i, s in enumerate(spatials)})
            total += project(state, pattern).probability
        assert abs(total - 1) < 1e-10


def test_threshold_ideal_limit():
    out = build("I").run()
    p = threshold_outcome_probability(out, DetectorModel(1.0, True), FOUR)
    assert p == pytest.approx(project(out, FOUR).probability, abs=1e-12)


def test_threshold_zero_efficiency():
    out = build("I").run()
    assert threshold_outcome_probability(out, DetectorModel(0.0, False), FOUR) == 0


def scheme_I_columns(r2s):
    """Single-photon transfer of the ideal chain, written out by hand."""
    r = [math.sqrt(x) for x in r2s]
    t = [math.sqrt(1 - x) for x in r2s]
    # output order: 1, 2, 3, 3'; same amplitudes for H and V at zero phase
    return [r[0], t[0] * r[1], t[0] * t[1] * r[2], t[0] * t[1] * t[2]]


def oracle_click_probability(pairs, eta, resolving):
    col = scheme_I_columns([0.25, 1 / 3, 0.5])
    # registry 0H 0V then (H, V) for each output mode
    d = 2 + 8
    u = [[0j] * d for _ in range(d)]
    for m, c in enumerate(col):
        u[2 + 2 * m][0] = c
        u[3 + 2 * m][1] = c
    occ = [0] * d
    occ[0] = occ[1] = pairs
    out = substitute({tuple(occ): 1.0}, u)
    groups = [(2 + 2 * m, 3 + 2 * m) for m in range(4)]
    return binomial_detection_probability(out, groups, eta, resolving)


# frozen from oracle_click_probability(3, 0.1, False)
THREE_PAIR_ETA_01 = 1.269433593749999e-4


def test_three_pair_false_accept_matches_frozen_oracle():
    assert oracle_click_probability(3, 0.1, False) == pytest.approx(THREE_PAIR_ETA_01, rel=1e-12)
    c = build("I")
    from wstate.schemes import Circuit
    c3 = Circuit(c.registry, pdc_source_npairs(3), c.elements, c.trigger, c.signal)
    p = threshold_outcome_probability(c3.run(), DetectorModel(0.1, False), FOUR)
    assert p > 0
    assert p == pytest.approx(THREE_PAIR_ETA_01, rel=1e-10)


@pytest.mark.parametrize("eta,resolving", [(0.6, False), (0.3, True), (1.0, False)])
def test_threshold_against_binomial_oracle(eta, resolving):
    from wstate.schemes import Circuit
    c = build("I")
    for pairs in (2, 3):
        cc = Circuit(c.registry, pdc_source_npairs(pairs), c.elements, c.trigger, c.signal)
        got = threshold_outcome_probability(cc.run(), DetectorModel(eta, resolving), FOUR)
        assert got == pytest.approx(oracle_click_probability(pairs, eta, resolving), abs=1e-14)
