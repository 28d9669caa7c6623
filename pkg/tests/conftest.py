import numpy as np
import pytest

from wstate.elements import AttenuatorSpec, BeamSplitterSpec, PhaseShifterSpec, RotatorSpec
from wstate.fock import make_registry


@pytest.fixture
def rng():
    return np.random.default_rng(20021027)


@pytest.fixture
def reg4():
    """Two spatial modes, four polarization modes."""
    return make_registry(["a", "b"])


def random_unitary(d, rng):
    z = (rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    return q * (np.diag(r) / np.abs(np.diag(r)))


_OPT_CACHE = {}


@pytest.fixture(scope="session")
def optimized():
    """Lazily computed optimize_probability results, shared across modules."""
    from wstate.analysis import optimize_probability

    def get(scheme):
        if scheme not in _OPT_CACHE:
            _OPT_CACHE[scheme] = optimize_probability(scheme)
        return _OPT_CACHE[scheme]
    return get


SPATIALS = ["0", "1", "2", "3", "4", "aux"]


def random_elements(rng, count, rotators=True):
    els = []
    for _ in range(count):
        kind = rng.integers(0, 4 if rotators else 3)
        a, b, c = rng.choice(SPATIALS[:5], size=3, replace=False)
        if kind == 0:
            els.append(BeamSplitterSpec.from_reflectivity(
                a, b, c, rng.uniform(), rng.uniform(), rng.uniform(-3, 3), rng.uniform(-3, 3)))
        elif kind == 1:
            els.append(PhaseShifterSpec(a, rng.uniform(-3, 3)))
        elif kind == 2:
            els.append(AttenuatorSpec(a, rng.uniform(), rng.uniform(), "aux"))
        else:
            els.append(RotatorSpec(a, rng.uniform(-3, 3)))
    return els


ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number, title, ok, detail in sorted(ACCEPTANCE, key=lambda r: r[0]):
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} {number:>2}. {title}: {detail}")
