"""Fidelities, closed-form cross-checks, optimization and design tools."""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping, Sequence

import numpy as np
from scipy.optimize import minimize

from .elements import AttenuatorSpec, PhaseShifterSpec
from .fock import FockState, RegistryError, inner_product, make_registry, number_state
from .postselection import (DetectionPattern, DetectorModel, postselect,
                            threshold_outcome_probability, transfer_probability,
                            trigger_select)
from .schemes import (OPTIMAL_R2, SIGNAL, STAGES, Circuit, PerturbationSpec, SchemeParams,
                      build, canonical_scheme, pdc_source_npairs)

SIGNAL_REGISTRY = make_registry(SIGNAL)
# V-photon position of each W-class basis term: (2H 3H 3'V), (2H 3V 3'H), (2V 3H 3'H)
TERM_V_MODE = ("3'", "3", "2")

# optimum yields and settings as stated in the source publication
STATED_OPTIMA = {
    "I": (3 / 32, {1: 1 / 4, 2: 1 / 3, 3: 1 / 2}),
    "II": (3 / 32, {1: 1 / 2, 2: 1 / 2, 3: 1 / 2}),
    "SPS": (3 / 32, {2: 1 / 2, 3: 1 / 2}),
}

# second-order coefficients of F in the reflectivity differences d_j d_k
STATED_QUADRATIC = {
    "I": {(1, 1): 0.0, (2, 2): -27 / 24, (3, 3): -16 / 24,
          (1, 2): 0.0, (1, 3): 0.0, (2, 3): 0.0},
    "II": {(1, 1): -8 / 9, (2, 2): -2 / 9, (3, 3): -6 / 9,
           (1, 2): -8 / 9, (1, 3): 0.0, (2, 3): 0.0},
}


@dataclass(frozen=True)
class WTarget:
    """W-class target with amplitudes on (2H3H3'V, 2H3V3'H, 2V3H3'H)."""

    amplitudes: tuple[complex, complex, complex]

    def __post_init__(self):
        amps = tuple(complex(a) for a in self.amplitudes)
        if len(amps) != 3:
            raise ValueError("a W-class target needs exactly three amplitudes")
        if abs(sum(abs(a) ** 2 for a in amps) - 1) > 1e-12:
            raise ValueError("target amplitudes must be normalized")
        object.__setattr__(self, "amplitudes", amps)

    @classmethod
    def from_values(cls, values: Sequence[complex]) -> WTarget:
        vals = [complex(v) for v in values]
        nrm = math.sqrt(sum(abs(v) ** 2 for v in vals))
        if len(vals) != 3 or not math.isfinite(nrm) or nrm < 1e-12:
            raise ValueError("target amplitudes are not normalizable")
        return cls(tuple(v / nrm for v in vals))

    @classmethod
    def equal(cls) -> WTarget:
        return cls((1 / math.sqrt(3),) * 3)

    def state(self, flavor: str = "V") -> FockState:
        terms = None
        for amp, vmode in zip(self.amplitudes, TERM_V_MODE):
            occ = {}
            for s in SIGNAL:
                odd = (s == vmode)
                pol = ("V" if odd else "H") if flavor == "V" else ("H" if odd else "V")
                occ[s + pol] = 1
            ket = number_state(SIGNAL_REGISTRY, occ) * amp
            terms = ket if terms is None else terms + ket
        return terms


def w_v() -> FockState:
    return WTarget.equal().state("V")


def w_h() -> FockState:
    return WTarget.equal().state("H")


def fidelity(state: FockState, target: WTarget | FockState) -> float:
    """|<target|state>|^2 for states on the signal modes 2, 3, 3'."""
    ref = target.state() if isinstance(target, WTarget) else target
    try:
        a = state.restrict(SIGNAL)
        b = ref.restrict(SIGNAL)
    except RegistryError as exc:
        raise RegistryError(f"fidelity needs states on modes 2, 3, 3': {exc}") from None
    na, nb = a.norm_sq(), b.norm_sq()
    if na == 0 or nb == 0:
        raise ValueError("fidelity of a zero state is undefined")
    return float(abs(inner_product(b, a)) ** 2 / (na * nb))


# -- probabilities ---------------------------------------------------------------

def closed_form_probability(scheme: str, params: SchemeParams) -> float:
    """The printed success-probability formulas, evaluated as written."""
    scheme = canonical_scheme(scheme)
    if not params.polarization_independent:
        raise ValueError("closed forms assume polarization-independent splitters")
    r = {k: math.sqrt(params.r2[k]) for k in params.r2}
    t = {k: math.sqrt(1 - params.r2[k]) for k in params.r2}
    if scheme == "I":
        return (2 * math.sqrt(6) * r[1] * t[1] ** 3 * r[2] * t[2] ** 2 * r[3] * t[3]) ** 2
    if scheme == "II":
        return (2 * math.sqrt(6) * r[1] ** 2 * t[1] ** 2 * r[2] * t[2] * r[3] * t[3]) ** 2
    return 0.5 * (math.sqrt(6) * r[2] * t[2] ** 2 * r[3] * t[3]) ** 2


def closed_form_exact(scheme: str, r2: Mapping[int, Fraction]) -> Fraction:
    """Same formulas in exact rational arithmetic (they are polynomial in r^2)."""
    scheme = canonical_scheme(scheme)
    x = {k: Fraction(v) for k, v in r2.items()}
    y = {k: 1 - v for k, v in x.items()}
    if scheme == "I":
        return 24 * x[1] * y[1] ** 3 * x[2] * y[2] ** 2 * x[3] * y[3]
    if scheme == "II":
        return 24 * x[1] ** 2 * y[1] ** 2 * x[2] * y[2] * x[3] * y[3]
    return Fraction(1, 2) * 6 * x[2] * y[2] ** 2 * x[3] * y[3]


def simulated_probability(scheme: str, params: SchemeParams) -> float:
    return postselect(build(scheme, params)).probability


def conditional_fidelity(scheme: str, params: SchemeParams, trigger_policy: str = "d1v",
                         target: WTarget | None = None, circuit: Circuit | None = None) -> float:
    """Fidelity of the heralded three-photon state to ``target`` (default W_V).

    ``trigger_policy`` is ``d1v``, ``d1h`` (with the 90 degree rotation) or
    ``both`` (probability-weighted mixture of the two branches). Returns NaN
    when the heralding event never happens.
    """
    target = target or WTarget.equal()
    circuit = circuit or build(scheme, params)
    res = postselect(circuit)
    if res.empty:
        return math.nan
    if circuit.trigger is None:
        return fidelity(res.conditional, target)
    policy = trigger_policy.lower()
    branches = {"d1v": ["D1V"], "d1h": ["D1H"], "both": ["D1V", "D1H"]}.get(policy)
    if branches is None:
        raise ValueError(f"unknown trigger policy {trigger_policy!r}")
    num = den = 0.0
    for trig in branches:
        sel = trigger_select(res, trig, rotate_on_H=True, trigger_mode=circuit.trigger,
                             signal=circuit.signal)
        if sel.empty:
            continue
        num += sel.probability * fidelity(sel.conditional, target)
        den += sel.probability
    return num / den if den else math.nan


# -- optimization ----------------------------------------------------------------

@dataclass
class OptimizationResult:
    scheme: str
    best_params: SchemeParams
    best_value: float
    trace: list[tuple[tuple[float, ...], float]] = field(default_factory=list)
    grid_best: tuple[float, ...] = ()
    grid_value: float = math.nan

    @property
    def best_r2(self) -> tuple[float, ...]:
        return tuple(float(self.best_params.r2[k]) for k in STAGES[self.scheme])

    def to_json(self) -> dict:
        value, settings = STATED_OPTIMA[self.scheme]
        stated = tuple(settings[k] for k in STAGES[self.scheme])
        matches = (abs(self.best_value - value) < 1e-6
                   and max(abs(a - b) for a, b in zip(self.best_r2, stated)) < 1e-4)
        return {
            "scheme": self.scheme,
            "stages": list(STAGES[self.scheme]),
            "best_r2": list(self.best_r2),
            "best_value": self.best_value,
            "grid_best_r2": list(self.grid_best),
            "grid_value": self.grid_value,
            "evaluations": len(self.trace),
            "paper_claim": {"value": value, "r2": list(stated)},
            "matches_paper": bool(matches),
        }


def _grid_axis(lo: float, hi: float, resolution: int) -> np.ndarray:
    ticks = np.arange(math.ceil(lo * resolution - 1e-9), math.floor(hi * resolution + 1e-9) + 1)
    return np.unique(np.concatenate([ticks / resolution, [lo, hi]]))


def grid_probabilities(scheme: str, axes: Sequence[np.ndarray], base: SchemeParams | None = None,
                       chunk: int = 4096) -> np.ndarray:
    """Post-selection probability on a product grid of r_k^2 values.

    Uses batched transfer matrices and permanents instead of sequential
    propagation; returns an array shaped like the grid.
    """
    scheme = canonical_scheme(scheme)
    stages = STAGES[scheme]
    base = base or SchemeParams.optimal(scheme)
    mesh = np.stack([m.ravel() for m in np.meshgrid(*axes, indexing="ij")], axis=-1)
    out = np.empty(len(mesh))
    for start in range(0, len(mesh), chunk):
        block = mesh[start:start + chunk]
        params = base.with_r2([block[:, i] for i in range(len(stages))], stages)
        out[start:start + chunk] = transfer_probability(build(scheme, params))
    return out.reshape([len(a) for a in axes])


def optimize_probability(scheme: str, bounds: Sequence[tuple[float, float]] | None = None,
                         resolution: int = 64) -> OptimizationResult:
    """Maximize the simulated post-selection probability over r_k^2.

    A product grid at spacing ``1/resolution`` seeds a bounded Nelder-Mead
    refinement. Grid ties resolve to the lexicographically smallest point.
    """
    scheme = canonical_scheme(scheme)
    stages = STAGES[scheme]
    bounds = [(0.0, 1.0)] * len(stages) if bounds is None else [tuple(map(float, b)) for b in bounds]
    if len(bounds) != len(stages):
        raise ValueError(f"scheme {scheme} needs {len(stages)} bounds")
    for lo, hi in bounds:
        if not (0.0 <= lo <= hi <= 1.0):
            raise ValueError(f"empty or invalid bounds ({lo}, {hi})")
    base = SchemeParams.optimal(scheme)
    axes = [_grid_axis(lo, hi, resolution) for lo, hi in bounds]
    grid = grid_probabilities(scheme, axes, base)
    idx = np.unravel_index(int(np.argmax(grid)), grid.shape)
    x0 = np.array([axes[i][j] for i, j in enumerate(idx)])

    trace: list[tuple[tuple[float, ...], float]] = []

    def value(x):
        x = np.clip(x, [b[0] for b in bounds], [b[1] for b in bounds])
        v = simulated_probability(scheme, base.with_r2([float(c) for c in x], stages))
        trace.append((tuple(float(c) for c in x), v))
        return v

    free = [i for i, (lo, hi) in enumerate(bounds) if hi > lo]
    lower = np.array([b[0] for b in bounds])
    upper = np.array([b[1] for b in bounds])

    def embed(y):
        x = x0.copy()
        x[free] = y
        return np.clip(x, lower, upper)

    best_x, best_v = x0, value(x0)
    if free:
        y0 = x0[free]
        simplex = [y0]
        for j, i in enumerate(free):
            step = min(1.0 / resolution, upper[i] - lower[i])
            q = y0.copy()
            q[j] = y0[j] + step if y0[j] + step <= upper[i] else y0[j] - step
            simplex.append(q)
        res = minimize(lambda y: -value(embed(y)), y0, method="Nelder-Mead",
                       bounds=[bounds[i] for i in free],
                       options={"initial_simplex": np.array(simplex), "xatol": 1e-11,
                                "fatol": 1e-16, "maxiter": 5000, "maxfev": 10000})
        cand = embed(res.x)
        cand_v = value(cand)
        if cand_v >= best_v:
            best_x, best_v = cand, cand_v
    best = base.with_r2([float(c) for c in best_x], stages)
    return OptimizationResult(scheme, best, best_v, trace,
                              tuple(float(c) for c in x0), float(grid[idx]))


# -- imperfection analysis -------------------------------------------------------

def perturbed_fidelity(scheme: str, deltas: Mapping[int, float], trigger_policy: str = "d1v",
                       probe: str = "symmetric") -> float:
    """Conditional fidelity with reflectivity differences d_k = r_kH^2 - r_kV^2.

    Returns NaN when a perturbed reflectivity leaves [0, 1].
    """
    make = PerturbationSpec.symmetric if probe == "symmetric" else PerturbationSpec.one_sided
    try:
        pert = make(scheme, deltas)
    except ValueError:
        return math.nan
    return conditional_fidelity(scheme, pert.params(), trigger_policy)


def fidelity_hessian(scheme: str, trigger_policy: str = "d1v", h: float = 1e-3,
                     probe: str = "symmetric") -> np.ndarray:
    """Central-difference Hessian of the conditional fidelity at d = 0."""
    scheme = canonical_scheme(scheme)
    if h < 1e-5:
        raise ValueError("finite-difference step below 1e-5 is swamped by rounding")
    stages = STAGES[scheme]
    f = lambda d: perturbed_fidelity(scheme, d, trigger_policy, probe)
    f0 = f({})
    n = len(stages)
    hess = np.zeros((n, n))
    for i, a in enumerate(stages):
        hess[i, i] = (f({a: h}) - 2 * f0 + f({a: -h})) / h ** 2
        for j in range(i + 1, n):
            b = stages[j]
            hess[i, j] = hess[j, i] = (f({a: h, b: h}) - f({a: h, b: -h})
                                       - f({a: -h, b: h}) + f({a: -h, b: -h})) / (4 * h ** 2)
    return hess


def stated_hessian(scheme: str) -> np.ndarray:
    """Hessian implied by the printed second-order fidelity expansions."""
    coeffs = STATED_QUADRATIC[canonical_scheme(scheme)]
    hess = np.zeros((3, 3))
    for (j, k), c in coeffs.items():
        if j == k:
            hess[j - 1, j - 1] = 2 * c
        else:
            hess[j - 1, k - 1] = hess[k - 1, j - 1] = c
    return hess


def _monomials(nvars: int, degree: int):
    out = [()]
    for d in range(1, degree + 1):
        def rec(start, left, acc):
            if left == 0:
                out.append(tuple(acc))
                return
            for v in range(start, nvars):
                rec(v, left - 1, acc + [v])
        rec(0, d, [])
    return out


def scan_fidelity(scheme: str, ranges: Mapping[int, tuple[float, float]], step: float,
                  trigger_policy: str = "d1v", jobs: int = 1):
    """Grid of conditional fidelities over reflectivity differences.

    Returns ``(rows, fit)`` where rows are ``(d1, d2, d3, F)`` and ``fit`` maps
    ``(j, k)`` to the fitted coefficient of ``d_j d_k`` (a quartic polynomial
    is fitted so the quadratic part is not biased by higher orders).
    """
    scheme = canonical_scheme(scheme)
    if step <= 0:
        raise ValueError("scan step must be positive")
    axes = {}
    for k in (1, 2, 3):
        lo, hi = ranges.get(k, (0.0, 0.0))
        if hi < lo:
            raise ValueError(f"empty range for d{k}")
        n = int(round((hi - lo) / step))
        axes[k] = np.linspace(lo, hi, n + 1) if n > 0 else np.array([lo])
    points = [tuple(float(v) for v in p) for p in
              np.stack(np.meshgrid(axes[1], axes[2], axes[3], indexing="ij"), -1).reshape(-1, 3)]
    args = [(scheme, {1: p[0], 2: p[1], 3: p[2]}, trigger_policy) for p in points]
    if jobs > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            values = list(pool.map(_scan_point, args))
    else:
        values = [_scan_point(a) for a in args]
    rows = [p + (v,) for p, v in zip(points, values)]

    varied = [k for k in (1, 2, 3) if len(axes[k]) > 1]
    fit = {}
    good = [r for r in rows if math.isfinite(r[3])]
    if varied:
        mons = _monomials(len(varied), 4)
        if len(good) >= len(mons):
            x = np.array([[r[k - 1] for k in varied] for r in good])
            design = np.stack([np.prod(x[:, list(m)], axis=1) if m else np.ones(len(x))
                               for m in mons], axis=1)
            coef = np.linalg.lstsq(design, np.array([r[3] for r in good]), rcond=None)[0]
            for m, c in zip(mons, coef):
                if len(m) == 2:
                    fit[(varied[m[0]], varied[m[1]])] = float(c)
    return rows, fit


def _scan_point(args):
    scheme, deltas, policy = args
    return perturbed_fidelity(scheme, deltas, policy)


# -- W-class design --------------------------------------------------------------

@dataclass(frozen=True)
class WClassDesign:
    scheme: str
    target: WTarget
    attenuation: Mapping[tuple[str, str], float]
    phases: Mapping[str, float]
    predicted_probability: float

    def circuit(self) -> Circuit:
        base = build(self.scheme)
        extra = []
        for s in SIGNAL:
            extra.append(AttenuatorSpec(s, self.attenuation[(s, "H")],
                                        self.attenuation[(s, "V")], f"aux-{s}"))
        for s in SIGNAL:
            if self.phases[s]:
                extra.append(PhaseShifterSpec(s, self.phases[s]))
        return base.extended([f"aux-{s}" for s in SIGNAL], extra)

    def verify(self) -> tuple[float, float]:
        """Simulate the designed circuit; returns (fidelity, probability)."""
        circuit = self.circuit()
        res = postselect(circuit)
        if res.empty:
            return math.nan, 0.0
        if circuit.trigger is not None:
            res = trigger_select(res, "D1V", trigger_mode=circuit.trigger, signal=circuit.signal)
        if res.empty:
            return math.nan, 0.0
        return fidelity(res.conditional, self.target), res.probability

    def to_json(self) -> dict:
        return {
            "scheme": self.scheme,
            "target": [[a.real, a.imag] for a in self.target.amplitudes],
            "attenuation": {f"{s}{p}": a for (s, p), a in sorted(self.attenuation.items())},
            "phase_V": {s: self.phases[s] for s in SIGNAL},
            "predicted_probability": self.predicted_probability,
        }


def design_w_class(target: WTarget, scheme: str = "I") -> WClassDesign:
    """Losses and V phases on modes 2, 3, 3' that turn the W output into ``target``.

    Each W term carries exactly one V photon, so a V-only amplitude
    ``a_m`` in mode m scales just the term whose V photon sits there. The
    largest target amplitude gets ``a = 1`` to keep as much yield as possible.
    For the triggered schemes the design applies to the D1V branch.
    """
    scheme = canonical_scheme(scheme)
    mags = [abs(c) for c in target.amplitudes]
    top = max(mags)
    ref = mags.index(top)
    ref_phase = cmath.phase(target.amplitudes[ref])
    attenuation = {(s, "H"): 1.0 for s in SIGNAL}
    phases = {}
    for c, mag, vmode in zip(target.amplitudes, mags, TERM_V_MODE):
        attenuation[(vmode, "V")] = mag / top
        if mag == 0:
            phases[vmode] = 0.0
            continue
        theta = math.remainder(cmath.phase(c) - ref_phase, 2 * math.pi)
        phases[vmode] = math.pi if abs(theta + math.pi) < 1e-15 else theta
    if scheme == "SPS":
        base = float(closed_form_exact("SPS", OPTIMAL_R2["SPS"]))
    else:
        base = float(closed_form_exact(scheme, OPTIMAL_R2[scheme])) / 2
    survival = sum((m / top) ** 2 for m in mags) / 3
    return WClassDesign(scheme, target, attenuation, phases, base * survival)


# -- yields and contamination ----------------------------------------------------

@dataclass(frozen=True)
class YieldModel:
    gamma: float = 1e-4
    sps_rate: float = 0.4
    stimulated_gain: float = 16.0
    ghz_reference: float = 3 / 8

    def __post_init__(self):
        for name in ("gamma", "sps_rate", "ghz_reference"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        if self.stimulated_gain < 1:
            raise ValueError("stimulated_gain must be >= 1")


def _exact(x: float) -> Fraction:
    # decimal inputs such as 0.4 are meant literally, not as their binary neighbours
    return Fraction(repr(float(x)))


def yield_report(model: YieldModel = YieldModel()) -> dict:
    """Rate comparison between the PDC-fed, stimulated and SPS-fed setups."""
    w_two_pair = closed_form_exact("I", OPTIMAL_R2["I"])
    w_sps = closed_form_exact("SPS", OPTIMAL_R2["SPS"])
    gamma, sps = _exact(model.gamma), _exact(model.sps_rate)
    gain, ghz = _exact(model.stimulated_gain), _exact(model.ghz_reference)
    four_photon = gamma ** 2
    sps3 = sps ** 3
    return {
        "w_probability_per_two_pairs": float(w_two_pair),
        "w_probability_simulated": simulated_probability("I", SchemeParams.optimal("I")),
        "ghz_probability_per_two_pairs": float(ghz),
        "ghz_ratio": float(w_two_pair / ghz),
        "pdc_four_photon_rate": float(four_photon),
        "pdc_w_rate": float(four_photon * w_two_pair),
        "three_pair_suppression": float(gamma),
        "stimulated_gain": float(gain),
        "stimulated_w_rate": float(gain * four_photon * w_two_pair),
        "sps_three_photon_rate": float(sps3),
        "sps_scheme_probability": float(w_sps),
        "sps_w_rate": float(sps3 * w_sps),
        "sps_to_pdc_rate_ratio": float(sps3 * w_sps / (four_photon * w_two_pair))
        if four_photon else math.inf,
    }


def contamination_estimate(scheme: str, model: YieldModel, detectors: DetectorModel,
                           params: SchemeParams | None = None) -> dict:
    """Three-pair false accepts relative to genuine two-pair events.

    n-pair emissions are weighted by gamma^n; both are propagated through the
    scheme and counted when the detectors report one click per detected mode.
    """
    scheme = canonical_scheme(scheme)
    if scheme == "SPS":
        raise ValueError("contamination applies to the PDC-fed schemes only")
    if not 0.0 < model.gamma <= 0.1:
        raise ValueError("gamma must lie in (0, 0.1]")
    if not 0.0 < detectors.efficiency <= 1.0:
        raise ValueError("detector efficiency must lie in (0, 1]")
    params = params or SchemeParams.optimal(scheme)
    circuit = build(scheme, params)
    pattern = DetectionPattern.one_per_mode(circuit.detected)
    probs = {}
    for n in (2, 3):
        c = Circuit(circuit.registry, pdc_source_npairs(n), circuit.elements,
                    circuit.trigger, circuit.signal, 1.0, circuit.name)
        probs[n] = threshold_outcome_probability(c.run(), detectors, pattern)
    signal = model.gamma ** 2 * probs[2]
    false = model.gamma ** 3 * probs[3]
    return {
        "scheme": scheme,
        "gamma": model.gamma,
        "efficiency": detectors.efficiency,
        "photon_number_resolving": detectors.photon_number_resolving,
        "pair_weight_ratio": model.gamma,
        "accept_probability_two_pairs": probs[2],
        "accept_probability_three_pairs": probs[3],
        "signal_rate": signal,
        "false_accept_rate": false,
        "ratio": false / signal if signal else math.inf,
    }
