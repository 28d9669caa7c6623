import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from wstate.fock import (DegenerateStateError, FockState, ModeLabel, RegistryError,
                         inner_product, make_number_state, make_registry, normalize,
                         number_state, random_state, scale_add, vacuum)


def test_vacuum_has_unit_norm(reg4):
    v = make_number_state(reg4, [0, 0, 0, 0])
    assert v.norm_sq() == 1.0
    assert v == vacuum(reg4)


def test_pdc_number_state():
    reg = make_registry(["0"])
    s = make_number_state(reg, (2, 2))
    assert s.normalized
    assert s.photon_numbers() == {4}


def test_w_basis_term_readback():
    reg = make_registry(["2", "3", "3'"])
    s = number_state(reg, {"2H": 1, "3H": 1, "3'V": 1})
    (occ, amp), = list(s)
    assert amp == 1
    assert s.counts(occ) == {ModeLabel("2", "H"): 1, ModeLabel("3", "H"): 1,
                             ModeLabel("3'", "V"): 1}


def test_length_mismatch(reg4):
    with pytest.raises(RegistryError):
        make_number_state(reg4, [1, 0])


def test_duplicate_spatial_rejected():
    with pytest.raises(RegistryError):
        make_registry(["1", "1"])


def test_orthogonal_basis_kets(reg4):
    a = make_number_state(reg4, [1, 0, 0, 0])
    b = make_number_state(reg4, [0, 1, 0, 0])
    assert inner_product(a, b) == 0
    assert inner_product(a, a) == 1


def test_inner_product_registry_mismatch(reg4):
    other = make_registry(["a", "c"])
    with pytest.raises(RegistryError):
        inner_product(vacuum(reg4), vacuum(other))


def test_scale_add_identity_and_hom_state():
    reg = make_registry(["p", "q"])
    psi = make_number_state(reg, [2, 0, 0, 0])
    phi = make_number_state(reg, [0, 0, 2, 0])
    assert scale_add([(1.0, psi), (0.0, phi)]) == psi
    hom = scale_add([(1 / math.sqrt(2), psi), (1 / math.sqrt(2), phi)])
    assert abs(hom.norm_sq() - 1) < 1e-15


def test_scale_add_does_not_normalize(reg4):
    psi = make_number_state(reg4, [1, 0, 0, 0])
    assert scale_add([(2.0, psi)]).norm_sq() == 4.0


def test_normalize_reports_squared_norm(reg4, rng):
    psi = random_state(reg4, 3, 5, rng)
    same, nsq = normalize(psi)
    assert abs(nsq - 1) < 1e-12
    scaled, nsq = normalize(2 * psi)
    assert abs(nsq - 4) < 1e-12
    assert abs(inner_product(scaled, psi) - 1) < 1e-12


def test_normalize_zero_state(reg4):
    with pytest.raises(DegenerateStateError):
        normalize(FockState(reg4, {}))


def test_pruning_below_tolerance(reg4):
    s = FockState(reg4, {(1, 0, 0, 0): 1.0, (0, 1, 0, 0): 1e-16})
    assert len(s) == 1


def test_strip_and_restrict():
    reg = make_registry(["1", "2"])
    s = FockState(reg, {(0, 1, 1, 0): 0.6, (0, 1, 0, 1): 0.8})
    stripped = s.strip("1")
    assert stripped.registry == make_registry(["2"])
    assert stripped.amplitude((1, 0)) == 0.6
    entangled = FockState(reg, {(0, 1, 1, 0): 0.6, (1, 0, 0, 1): 0.8})
    with pytest.raises(ValueError):
        entangled.strip("1")
    with pytest.raises(RegistryError):
        s.restrict(["1"])


def test_dump_format():
    reg = make_registry(["x"])
    s = FockState(reg, {(0, 1): 0.1, (1, 0): -0.5j})
    lines = s.to_dump().splitlines()
    assert lines[0] == "0,1 0.10000000000000001 0"
    assert lines[1].startswith("1,0 0 -0.5")
    for line in lines:
        _, re, im = line.split()
        assert float(format(float(re), ".17g")) == float(re)


reg_s = make_registry(["a", "b", "c"])


@st.composite
def states(draw):
    n = draw(st.integers(1, 4))
    terms = draw(st.dictionaries(
        st.lists(st.integers(0, n), min_size=6, max_size=6).map(tuple),
        st.tuples(st.floats(-1, 1), st.floats(-1, 1)).map(lambda z: complex(*z)),
        min_size=1, max_size=6))
    return FockState(reg_s, terms)


@settings(max_examples=60, deadline=None)
@given(states(), states())
def test_inner_product_conjugate_symmetric(a, b):
    assert abs(inner_product(a, b) - inner_product(b, a).conjugate()) < 1e-14


@settings(max_examples=60, deadline=None)
@given(states(), states())
def test_parallelogram_law(a, b):
    lhs = (a + b).norm_sq() + (a - b).norm_sq()
    rhs = 2 * a.norm_sq() + 2 * b.norm_sq()
    assert abs(lhs - rhs) < 1e-12


@settings(max_examples=60, deadline=None)
@given(st.lists(st.integers(0, 8), min_size=6, max_size=6))
def test_number_state_round_trip(counts):
    s = make_number_state(reg_s, counts)
    (occ, _), = list(s)
    assert list(occ) == counts
