"""Detection patterns, post-selected probabilities and trigger logic."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Mapping, Sequence, Union

import numpy as np

from .elements import (AttenuatorSpec, RotatorSpec, apply_element, output_amplitude,
                       transfer_columns)
from .fock import FockState, ModeLabel, RegistryError, make_registry, normalize

ONE_ANY = "one_any"
VACUUM = "vacuum"
UNCONSTRAINED = "unconstrained"
AUX_PREFIX = "aux"
LOSS_PREFIX = "lost-"


@dataclass(frozen=True)
class Exactly:
    n: int
    pol: str

    def __post_init__(self):
        if self.n < 0 or self.pol not in ("H", "V"):
            raise ValueError(f"bad exact-count constraint ({self.n}, {self.pol})")


@dataclass(frozen=True)
class Counts:
    """Both polarization counts of a spatial mode fixed."""

    h: int
    v: int

    def __post_init__(self):
        if self.h < 0 or self.v < 0:
            raise ValueError("photon counts must be non-negative")


Constraint = Union[str, Exactly, Counts]


def _check_constraint(c):
    if isinstance(c, (Exactly, Counts)) or c in (ONE_ANY, VACUUM, UNCONSTRAINED):
        return c
    raise ValueError(f"unknown detection constraint {c!r}")


@dataclass(frozen=True)
class DetectionPattern:
    """Per-spatial-mode detection requirements; unlisted modes are unconstrained."""

    constraints: Mapping[str, Constraint]

    def __post_init__(self):
        cons = {str(k): _check_constraint(v) for k, v in self.constraints.items()}
        if not any(v != UNCONSTRAINED for v in cons.values()):
            raise ValueError("detection pattern must constrain at least one mode")
        object.__setattr__(self, "constraints", cons)

    @classmethod
    def one_per_mode(cls, spatials: Sequence[str]) -> DetectionPattern:
        return cls({s: ONE_ANY for s in spatials})

    @classmethod
    def from_json(cls, d: Mapping[str, str]) -> DetectionPattern:
        from .schemes import spatial_label
        cons = {}
        for k, v in d.items():
            if isinstance(v, str) and v.startswith("exactly:"):
                _, n, pol = v.split(":")
                v = Exactly(int(n), pol)
            elif isinstance(v, str) and v.startswith("counts:"):
                _, h, vv = v.split(":")
                v = Counts(int(h), int(vv))
            cons[spatial_label(k)] = v
        return cls(cons)

    def to_json(self) -> dict:
        def enc(v):
            if isinstance(v, Exactly):
                return f"exactly:{v.n}:{v.pol}"
            if isinstance(v, Counts):
                return f"counts:{v.h}:{v.v}"
            return v
        return {k: enc(v) for k, v in self.constraints.items()}


@dataclass(frozen=True)
class PostselectionResult:
    probability: float
    conditional: FockState | None

    @property
    def empty(self) -> bool:
        return self.conditional is None


@dataclass(frozen=True)
class DetectorModel:
    efficiency: float = 1.0
    photon_number_resolving: bool = True

    def __post_init__(self):
        if not 0.0 <= self.efficiency <= 1.0:
            raise ValueError("detector efficiency must lie in [0, 1]")


def _mode_groups(registry, pattern: DetectionPattern, aux_vacuum: bool):
    groups = []
    for s, c in pattern.constraints.items():
        idx = {m.polarization: i for i, m in enumerate(registry) if m.spatial == s}
        if not idx:
            raise RegistryError(f"pattern mode {s!r} not in registry")
        groups.append((idx["H"], idx["V"], c))
    if aux_vacuum:
        for i, m in enumerate(registry):
            if m.spatial.startswith(AUX_PREFIX) and m.spatial not in pattern.constraints:
                if m.polarization == "H":
                    groups.append((i, i + 1, VACUUM))
    return groups


def _satisfies(occ, groups, threshold=False) -> bool:
    for h, v, c in groups:
        nh, nv = occ[h], occ[v]
        if c == UNCONSTRAINED:
            continue
        if c == VACUUM:
            if nh or nv:
                return False
        elif c == ONE_ANY:
            if (nh + nv < 1) if threshold else (nh + nv != 1):
                return False
        elif isinstance(c, Counts):
            if threshold:
                if (nh >= 1) != (c.h >= 1) or (nv >= 1) != (c.v >= 1):
                    return False
            elif (nh, nv) != (c.h, c.v):
                return False
        else:
            n = nh if c.pol == "H" else nv
            if threshold:
                if (n >= 1) != (c.n >= 1):
                    return False
            elif n != c.n:
                return False
    return True


def project(state: FockState, pattern: DetectionPattern) -> PostselectionResult:
    """Keep the terms consistent with ``pattern`` and renormalize.

    Attenuator loss modes (spatial labels starting with ``aux``) are required
    to stay empty. The probability is relative to the input's own norm.
    """
    groups = _mode_groups(state.registry, pattern, aux_vacuum=True)
    kept = FockState(state.registry, {occ: a for occ, a in state.terms.items()
                                      if _satisfies(occ, groups)})
    total = state.norm_sq()
    if total == 0.0:
        return PostselectionResult(0.0, None)
    p = kept.norm_sq() / total
    if p < 1e-28:
        return PostselectionResult(0.0, None)
    return PostselectionResult(p, normalize(kept)[0])


def trigger_select(result: PostselectionResult, trigger: str, rotate_on_H: bool = True,
                   trigger_mode: str = "1",
                   signal: Sequence[str] = ("2", "3", "3'")) -> PostselectionResult:
    """Measure the trigger photon's polarization and keep one branch.

    ``trigger`` is ``"D1V"`` or ``"D1H"``. The trigger mode is stripped and
    the conditional reduced to the ``signal`` modes. For D1H with
    ``rotate_on_H`` the signal photons are rotated by 90 degrees. The
    returned probability includes ``result.probability``.
    """
    pol = {"D1V": "V", "D1H": "H"}.get(str(trigger).upper())
    if pol is None:
        raise ValueError(f"trigger must be D1V or D1H, got {trigger!r}")
    if result.empty:
        return result
    state = result.conditional
    if not any(m.spatial == trigger_mode for m in state.registry):
        raise RegistryError(f"trigger mode {trigger_mode!r} absent from the conditional state")
    h = state.index(ModeLabel(trigger_mode, "H"))
    v = state.index(ModeLabel(trigger_mode, "V"))
    want = (0, 1) if pol == "V" else (1, 0)
    branch = FockState(state.registry, {occ: a for occ, a in state.terms.items()
                                        if (occ[h], occ[v]) == want})
    p = branch.norm_sq()
    if p < 1e-28:
        return PostselectionResult(0.0, None)
    branch = normalize(branch)[0].strip(trigger_mode)
    branch = branch.restrict(signal)
    if pol == "H" and rotate_on_H:
        for s in signal:
            branch = apply_element(branch, RotatorSpec(s, math.pi / 2))
    return PostselectionResult(result.probability * p, branch)


def with_detector_loss(state: FockState, spatials: Sequence[str], efficiency: float) -> FockState:
    """Dilate per-mode detector inefficiency into ``lost-<mode>`` modes."""
    registry = state.registry + make_registry(LOSS_PREFIX + s for s in spatials)
    out = state.embed(registry)
    amp = math.sqrt(efficiency)
    for s in spatials:
        out = apply_element(out, AttenuatorSpec(s, amp, amp, LOSS_PREFIX + s))
    return out


def threshold_outcome_probability(state: FockState, detectors: DetectorModel,
                                  pattern: DetectionPattern) -> float:
    """Probability that the detectors report ``pattern``.

    Each constrained mode first loses photons with amplitude ``sqrt(eta)``;
    lost photons (and attenuator aux photons) are never observed and are
    summed over. Non-resolving detectors only report click / no click, so
    ``one_any`` accepts any non-zero count.
    """
    detected = [s for s, c in pattern.constraints.items() if c != UNCONSTRAINED]
    lossy = with_detector_loss(state, detected, detectors.efficiency)
    groups = _mode_groups(lossy.registry, pattern, aux_vacuum=False)
    threshold = not detectors.photon_number_resolving
    total = lossy.norm_sq()
    hit = sum(abs(a) ** 2 for occ, a in lossy.terms.items()
              if _satisfies(occ, groups, threshold))
    return float(hit / total) if total else 0.0


def pattern_outputs(registry: Sequence[ModeLabel], n_photons: int,
                    pattern: DetectionPattern):
    """Enumerate every occupation vector with ``n_photons`` satisfying ``pattern``."""
    registry = tuple(registry)
    groups = _mode_groups(registry, pattern, aux_vacuum=True)
    fixed = {}
    options = []
    free = set(range(len(registry)))
    for h, v, c in groups:
        free -= {h, v}
        if c == VACUUM:
            fixed[h] = fixed[v] = 0
        elif c == ONE_ANY:
            options.append(((h, 1, v, 0), (h, 0, v, 1)))
        elif c == UNCONSTRAINED:
            free |= {h, v}
        elif isinstance(c, Counts):
            options.append(((h, c.h, v, c.v),))
        else:
            other = v if c.pol == "H" else h
            mine = h if c.pol == "H" else v
            options.append(((mine, c.n),))
            free.add(other)
    free = sorted(free)
    for choice in itertools.product(*options):
        base = [0] * len(registry)
        for opt in choice:
            for j in range(0, len(opt), 2):
                base[opt[j]] = opt[j + 1]
        rest = n_photons - sum(base)
        if rest < 0:
            continue
        if not free:
            if rest == 0:
                yield tuple(base)
            continue
        for combo in itertools.combinations_with_replacement(free, rest):
            occ = list(base)
            for j in combo:
                occ[j] += 1
            yield tuple(occ)


def transfer_probability(circuit, pattern: DetectionPattern | None = None):
    """Post-selection probability from the composed transfer matrix.

    Works on batched circuits (array-valued parameters) and is the fast path
    used for grid scans; includes the circuit's source weight.
    """
    pattern = pattern or DetectionPattern.one_per_mode(circuit.detected)
    source = circuit.source.terms
    cols = sorted({i for occ in source for i, c in enumerate(occ) if c})
    u = transfer_columns(circuit.elements, circuit.registry, cols)
    local = {occ: tuple(occ[i] for i in cols) for occ in source}
    total = 0.0
    for n in circuit.source.photon_numbers():
        for out in pattern_outputs(circuit.registry, n, pattern):
            amp = 0j
            for occ, a in source.items():
                if sum(occ) == n:
                    amp = amp + a * output_amplitude(u, local[occ], out)
            total = total + np.abs(amp) ** 2
    return circuit.source_weight * total / circuit.source.norm_sq()


def postselect(circuit, pattern: DetectionPattern | None = None) -> PostselectionResult:
    """Run the circuit sequentially and project on its detection pattern.

    The probability includes the circuit's source weight (1/2 for SPS).
    """
    pattern = pattern or DetectionPattern.one_per_mode(circuit.detected)
    res = project(circuit.run(), pattern)
    return PostselectionResult(res.probability * circuit.source_weight, res.conditional)
