"""Photon sources and the prebuilt W-state preparation circuits.

Three layouts are provided: the cascaded splitter chain fed by two PDC pairs
(scheme I), the balanced two-arm layout (scheme II) and the three-photon
layout fed by single photon sources (SPS).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from typing import Any, Mapping, Sequence

import numpy as np

from .elements import (AttenuatorSpec, BeamSplitterSpec, Element, ModeMap,
                       PhaseShifterSpec, RotatorSpec, apply_element, apply_mode_map,
                       transfer_matrix)
from .fock import (FockState, ModeLabel, make_registry, normalize, number_state,
                   parse_mode)

SCHEMES = ("I", "II", "SPS")
SIGNAL = ("2", "3", "3'")
TRIGGER = "1"

# reflectivities r_k^2 at which the W-state yield is stated to peak
OPTIMAL_R2 = {
    "I": {1: 1 / 4, 2: 1 / 3, 3: 1 / 2},
    "II": {1: 1 / 2, 2: 1 / 2, 3: 1 / 2},
    "SPS": {2: 1 / 2, 3: 1 / 2},
}
STAGES = {"I": (1, 2, 3), "II": (1, 2, 3), "SPS": (2, 3)}


def canonical_scheme(name: str) -> str:
    key = str(name).strip().upper()
    if key not in SCHEMES:
        raise ValueError(f"unknown scheme {name!r}; expected one of I, II, SPS")
    return key


@dataclass(frozen=True)
class SchemeParams:
    """Splitter reflectivities, V phases and polarization-dependent offsets.

    ``r2[k]`` is the intensity reflectivity of splitter k; ``delta[(k, L)]``
    shifts it for polarization L, so the reflectivity seen by L is
    ``r2[k] + delta[(k, L)]``.
    """

    r2: Mapping[int, Any]
    phi: Mapping[int, Any] = field(default_factory=dict)
    psi: Mapping[int, Any] = field(default_factory=dict)
    compensation: str = "auto"
    delta: Mapping[tuple[int, str], Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.compensation not in ("auto", "none"):
            raise ValueError("compensation must be 'auto' or 'none'")
        for (k, pol) in self.delta:
            if pol not in ("H", "V") or k not in self.r2:
                raise ValueError(f"bad perturbation key {(k, pol)!r}")
        for k in self.r2:
            for pol in ("H", "V"):
                v = np.asarray(self.r2_pol(k, pol), dtype=float)
                if not np.all(np.isfinite(v) & (v >= 0) & (v <= 1)):
                    raise ValueError(f"reflectivity r_{k}{pol}^2 outside [0, 1]")
        for ph in (self.phi, self.psi):
            for v in ph.values():
                if not np.all(np.isfinite(np.asarray(v, dtype=float))):
                    raise ValueError("phases must be finite")

    def r2_pol(self, k: int, pol: str):
        return self.r2[k] + self.delta.get((k, pol), 0.0)

    def phase(self, which: str, k: int):
        return (self.phi if which == "phi" else self.psi).get(k, 0.0)

    @property
    def polarization_independent(self) -> bool:
        return all(np.all(np.asarray(v) == 0) for v in self.delta.values())

    @classmethod
    def optimal(cls, scheme: str, **kw) -> SchemeParams:
        return cls(dict(OPTIMAL_R2[canonical_scheme(scheme)]), **kw)

    def with_r2(self, values: Sequence[float], stages: Sequence[int]) -> SchemeParams:
        r2 = dict(self.r2)
        r2.update(zip(stages, values))
        return replace(self, r2=r2)

    def to_json(self) -> dict:
        return {
            "r2": {str(k): _num(v) for k, v in sorted(self.r2.items())},
            "phi": {str(k): _num(v) for k, v in sorted(self.phi.items())},
            "psi": {str(k): _num(v) for k, v in sorted(self.psi.items())},
            "compensation": self.compensation,
            "delta": {f"{k}{p}": _num(v) for (k, p), v in sorted(self.delta.items())},
        }


def _num(v):
    return float(v)


@dataclass(frozen=True)
class PerturbationSpec:
    """Polarization-dependent reflectivity errors around a scheme's optimum."""

    delta: Mapping[tuple[int, str], float]
    r_opt: Mapping[int, float]

    def __post_init__(self):
        for (k, pol), d in self.delta.items():
            if k not in self.r_opt:
                raise ValueError(f"no optimum reflectivity for splitter {k}")
            if not 0.0 <= self.r_opt[k] + d <= 1.0:
                raise ValueError(f"r_{k}{pol}^2 = {self.r_opt[k] + d} outside [0, 1]")

    @classmethod
    def symmetric(cls, scheme: str, deltas: Mapping[int, float]) -> PerturbationSpec:
        """Split each difference d_k as +d_k/2 on H and -d_k/2 on V."""
        delta = {}
        for k, d in deltas.items():
            delta[(k, "H")] = d / 2
            delta[(k, "V")] = -d / 2
        return cls(delta, dict(OPTIMAL_R2[canonical_scheme(scheme)]))

    @classmethod
    def one_sided(cls, scheme: str, deltas: Mapping[int, float]) -> PerturbationSpec:
        """Put the whole difference on H, leaving V at the optimum."""
        return cls({(k, "H"): d for k, d in deltas.items()},
                   dict(OPTIMAL_R2[canonical_scheme(scheme)]))

    def differences(self) -> dict[int, float]:
        return {k: self.delta.get((k, "H"), 0.0) - self.delta.get((k, "V"), 0.0)
                for k in self.r_opt}

    def params(self, **kw) -> SchemeParams:
        return SchemeParams(dict(self.r_opt), delta=dict(self.delta), **kw)


@dataclass(frozen=True)
class Circuit:
    """Source state plus an ordered element list on a fixed registry."""

    registry: tuple[ModeLabel, ...]
    source: FockState
    elements: tuple[Element, ...]
    trigger: str | None = TRIGGER
    signal: tuple[str, ...] = SIGNAL
    source_weight: float = 1.0
    name: str = "custom"

    def __post_init__(self):
        registry = tuple(self.registry)
        object.__setattr__(self, "registry", registry)
        object.__setattr__(self, "elements", tuple(self.elements))
        object.__setattr__(self, "signal", tuple(str(s) for s in self.signal))
        source = self.source if self.source.registry == registry else self.source.embed(registry)
        object.__setattr__(self, "source", source)
        spatial = {m.spatial for m in registry}
        produced = {m.spatial for occ in source.terms
                    for m, c in zip(registry, occ) if c}
        used_aux = set()
        for el in self.elements:
            for s in el.spatials:
                if s not in spatial:
                    raise ValueError(f"element {el!r} uses unknown spatial mode {s!r}")
            if isinstance(el, BeamSplitterSpec):
                for out in (el.reflected, el.transmitted):
                    if out in produced:
                        raise ValueError(
                            f"splitter output {out!r} is already in use; elements out of order")
                produced.update((el.reflected, el.transmitted))
            if isinstance(el, AttenuatorSpec):
                if el.aux in produced or el.aux in used_aux:
                    raise ValueError(f"attenuator aux mode {el.aux!r} must be fresh and unique")
                used_aux.add(el.aux)
        for s in self.signal + ((self.trigger,) if self.trigger else ()):
            if s not in spatial:
                raise ValueError(f"detected mode {s!r} not in registry")

    @property
    def detected(self) -> tuple[str, ...]:
        return ((self.trigger,) if self.trigger else ()) + self.signal

    def run(self) -> FockState:
        """Propagate the source through every element, one at a time."""
        state = self.source
        for el in self.elements:
            state = apply_element(state, el)
        return state

    def transfer(self) -> ModeMap:
        return transfer_matrix(self.elements, self.registry)

    def extended(self, extra_spatials: Sequence[str], extra_elements: Sequence[Element]) -> Circuit:
        registry = self.registry + make_registry(extra_spatials)
        return replace(self, registry=registry, source=self.source.embed(registry),
                       elements=self.elements + tuple(extra_elements))

    def to_json(self) -> dict:
        spatials = []
        for m in self.registry:
            if m.spatial not in spatials:
                spatials.append(m.spatial)
        return {
            "name": self.name,
            "modes": spatials,
            "source": {"terms": [{"modes": {str(m): c for m, c in zip(self.registry, occ) if c},
                                   "re": a.real, "im": a.imag} for occ, a in self.source],
                       "weight": float(self.source_weight)},
            "elements": [element_to_json(el) for el in self.elements],
            "trigger": self.trigger,
            "signal": list(self.signal),
        }


def element_to_json(el: Element) -> dict:
    if isinstance(el, BeamSplitterSpec):
        return {"type": "bs", "in": el.input, "refl": el.reflected, "trans": el.transmitted,
                "r2_H": float(el.r_H) ** 2, "r2_V": float(el.r_V) ** 2,
                "phi": float(el.phi), "psi": float(el.psi)}
    if isinstance(el, PhaseShifterSpec):
        return {"type": "bps", "target": el.target, "theta_V": float(el.theta_V)}
    if isinstance(el, RotatorSpec):
        return {"type": "rot", "target": el.target, "angle": float(el.angle)}
    if isinstance(el, AttenuatorSpec):
        return {"type": "att", "target": el.target, "amp_H": float(el.amp_H),
                "amp_V": float(el.amp_V), "aux": el.aux}
    raise TypeError(f"not an optical element: {el!r}")


def spatial_label(name) -> str:
    """Accept the JSON-friendly ``3p`` spelling for primed modes."""
    name = str(name)
    return name[:-1] + "'" if name.endswith("p") and name[:-1].isdigit() else name


def element_from_json(d: Mapping) -> Element:
    kind = d.get("type")
    try:
        if kind == "bs":
            r2_H = float(d["r2_H"]) if "r2_H" in d else float(d["r2"])
            r2_V = float(d.get("r2_V", r2_H))
            return BeamSplitterSpec.from_reflectivity(
                spatial_label(d["in"]), spatial_label(d["refl"]), spatial_label(d["trans"]),
                r2_H, r2_V, float(d.get("phi", 0.0)), float(d.get("psi", 0.0)))
        if kind == "bps":
            return PhaseShifterSpec(spatial_label(d["target"]), float(d.get("theta_V", d.get("theta", 0.0))))
        if kind == "rot":
            return RotatorSpec(spatial_label(d["target"]), float(d["angle"]))
        if kind == "att":
            return AttenuatorSpec(spatial_label(d["target"]), float(d.get("amp_H", 1.0)),
                                  float(d.get("amp_V", 1.0)), spatial_label(d["aux"]))
    except KeyError as exc:
        raise ValueError(f"element {kind!r} is missing field {exc.args[0]!r}") from None
    raise ValueError(f"unknown element type {kind!r}")


def circuit_from_json(d: Mapping) -> Circuit:
    """Inverse of :meth:`Circuit.to_json`; also accepts hand-written sources.

    The source may be ``{"type": "pdc", "pairs": n}``, ``{"type": "sps"}`` or
    an explicit term list.
    """
    elements = [element_from_json(e) for e in d.get("elements", [])]
    src = d.get("source", {"type": "pdc", "pairs": 2})
    weight = float(src.get("weight", 1.0))
    if src.get("type") == "pdc":
        source = pdc_source_npairs(int(src.get("pairs", 2)))
    elif src.get("type") == "sps":
        source, weight = sps_source()
    elif "terms" in src:
        terms = src["terms"]
        modes = [parse_mode(spatial_label(m[:-1]) + m[-1]) for t in terms for m in t["modes"]]
        registry = make_registry(dict.fromkeys(m.spatial for m in modes))
        source = None
        for t in terms:
            ket = number_state(registry, {parse_mode(spatial_label(m[:-1]) + m[-1]): c
                                          for m, c in t["modes"].items()})
            ket = ket * complex(t.get("re", 1.0), t.get("im", 0.0))
            source = ket if source is None else source + ket
    else:
        raise ValueError("source must have type 'pdc', 'sps' or a 'terms' list")
    spatials = list(d.get("modes", []))
    for m in source.spatials:
        if m not in spatials:
            spatials.append(m)
    for el in elements:
        for s in el.spatials:
            if s not in spatials:
                spatials.append(s)
    spatials = [spatial_label(s) for s in spatials]
    trigger = d.get("trigger", TRIGGER)
    signal = [spatial_label(s) for s in d.get("signal", SIGNAL)]
    registry = make_registry(dict.fromkeys(spatials))
    return Circuit(registry, source, tuple(elements),
                   spatial_label(trigger) if trigger else None, tuple(signal),
                   weight, d.get("name", "custom"))


def load_circuit(path) -> Circuit:
    with open(path) as fh:
        return circuit_from_json(json.load(fh))


# -- sources -------------------------------------------------------------------

def pdc_source_npairs(n: int) -> FockState:
    """``n`` collinear type-II pairs: ``|n>_0H |n>_0V``."""
    if int(n) != n or n < 0:
        raise ValueError("number of pairs must be a non-negative integer")
    return number_state(make_registry(["0"]), {"0H": n, "0V": n})


def pdc_source() -> FockState:
    return pdc_source_npairs(2)


def symmetric_coupler(registry, a: str, b: str) -> ModeMap:
    """Lossless 50:50 splitter between paths ``a`` and ``b``.

    Uses the symmetric convention ``[[1, i], [i, 1]] / sqrt(2)`` on both
    polarizations.
    """
    registry = tuple(registry)
    m = np.eye(len(registry), dtype=complex)
    for pol in ("H", "V"):
        i, j = registry.index(ModeLabel(a, pol)), registry.index(ModeLabel(b, pol))
        m[i, i] = m[j, j] = 1 / math.sqrt(2)
        m[i, j] = m[j, i] = 1j / math.sqrt(2)
    return ModeMap(registry, m)


def hom_state() -> FockState:
    """Two H photons from SPS1/SPS2 after the symmetric splitter BS1.

    Paths are ``0`` (towards the rest of the setup) and ``x`` (discarded).
    """
    registry = make_registry(["0", "x"])
    inp = number_state(registry, {"0H": 1, "xH": 1})
    return apply_mode_map(inp, symmetric_coupler(registry, "0", "x"))


def sps_source() -> tuple[FockState, float]:
    """Heralded ``|2>_0H |1>_0V`` built from three single photons.

    Returns the state and the probability (1/2) that both H photons leave BS1
    towards path 0; SPS3's V photon is then combined into the same path.
    """
    hom = hom_state()
    kept = FockState(hom.registry, {occ: a for occ, a in hom.terms.items()
                                    if occ == (2, 0, 0, 0)})
    kept, prob = normalize(kept)
    path0 = kept.strip("x")
    amp = path0.amplitude((2, 0))
    state = number_state(path0.registry, {"0H": 2, "0V": 1}) * amp
    return state, prob


# -- scheme builders -----------------------------------------------------------

def _bs(params: SchemeParams, k: int, inp: str, refl: str, trans: str) -> BeamSplitterSpec:
    return BeamSplitterSpec.from_reflectivity(
        inp, refl, trans, params.r2_pol(k, "H"), params.r2_pol(k, "V"),
        params.phase("phi", k), params.phase("psi", k))


def build_scheme_I(params: SchemeParams) -> Circuit:
    """Cascade 0 -> (1, 1'), 1' -> (2, 2'), 2' -> (3, 3')."""
    p = params
    registry = make_registry(["0", "1", "1'", "2", "2'", "3", "3'"])
    elements = [_bs(p, 1, "0", "1", "1'"), _bs(p, 2, "1'", "2", "2'"),
                _bs(p, 3, "2'", "3", "3'")]
    if p.compensation == "auto":
        elements += [
            PhaseShifterSpec("2", -p.phase("phi", 2) + p.phase("psi", 2) + p.phase("psi", 3)),
            PhaseShifterSpec("3", -p.phase("phi", 3) + p.phase("psi", 3)),
        ]
    return Circuit(registry, pdc_source(), tuple(elements), TRIGGER, SIGNAL, 1.0, "I")


def build_scheme_II(params: SchemeParams) -> Circuit:
    """Two arms: 0 -> (A, B), A -> (2 refl, 1 trans), B -> (3, 3')."""
    p = params
    registry = make_registry(["0", "A", "B", "1", "2", "3", "3'"])
    elements = [_bs(p, 1, "0", "A", "B"), _bs(p, 2, "A", "2", "1"),
                _bs(p, 3, "B", "3", "3'")]
    if p.compensation == "auto":
        elements += [
            PhaseShifterSpec("2", -p.phase("phi", 1) - p.phase("phi", 2)
                             + p.phase("psi", 1) + p.phase("psi", 3)),
            PhaseShifterSpec("3", -p.phase("phi", 3) + p.phase("psi", 3)),
        ]
    return Circuit(registry, pdc_source(), tuple(elements), TRIGGER, SIGNAL, 1.0, "II")


def build_sps_scheme(params: SchemeParams) -> Circuit:
    """SPS-fed chain 0 -> (2, 2'), 2' -> (3, 3'); no trigger photon."""
    p = params
    source, weight = sps_source()
    registry = make_registry(["0", "2", "2'", "3", "3'"])
    elements = [_bs(p, 2, "0", "2", "2'"), _bs(p, 3, "2'", "3", "3'")]
    if p.compensation == "auto":
        elements += [
            PhaseShifterSpec("2", -p.phase("phi", 2) + p.phase("psi", 2) + p.phase("psi", 3)),
            PhaseShifterSpec("3", -p.phase("phi", 3) + p.phase("psi", 3)),
        ]
    return Circuit(registry, source, tuple(elements), None, SIGNAL, weight, "SPS")


BUILDERS = {"I": build_scheme_I, "II": build_scheme_II, "SPS": build_sps_scheme}


def build(scheme: str, params: SchemeParams | None = None) -> Circuit:
    scheme = canonical_scheme(scheme)
    return BUILDERS[scheme](params if params is not None else SchemeParams.optimal(scheme))
