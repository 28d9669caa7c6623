"""Sparse polarization-resolved Fock states.

A :class:`FockState` maps occupation vectors (one count per ``(spatial,
polarization)`` mode of its registry) to complex amplitudes. Basis kets are
the normalized number states, so no ``sqrt(n!)`` factors live in storage.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

PRUNE_TOL = 1e-15
NORM_TOL = 1e-12
DEGENERATE_NORM = 1e-28

POLARIZATIONS = ("H", "V")


class RegistryError(ValueError):
    """Mode registries of two operands (or a label and a registry) disagree."""


class DegenerateStateError(ValueError):
    """Raised when normalizing a state of (numerically) zero norm."""


@dataclass(frozen=True, order=True)
class ModeLabel:
    spatial: str
    polarization: str

    def __post_init__(self):
        if self.polarization not in POLARIZATIONS:
            raise ValueError(f"polarization must be H or V, got {self.polarization!r}")
        object.__setattr__(self, "spatial", str(self.spatial))

    def __str__(self):
        return f"{self.spatial}{self.polarization}"


def make_registry(spatials: Iterable[str]) -> tuple[ModeLabel, ...]:
    """Registry with an H and a V mode for each spatial label, in order."""
    registry = tuple(ModeLabel(str(s), p) for s in spatials for p in POLARIZATIONS)
    if len(set(registry)) != len(registry):
        raise RegistryError("duplicate spatial labels in registry")
    return registry


def parse_mode(text: str) -> ModeLabel:
    """Parse ``"3'V"`` style labels into a :class:`ModeLabel`."""
    text = text.strip()
    if len(text) < 2 or text[-1] not in POLARIZATIONS:
        raise ValueError(f"cannot parse mode label {text!r}")
    return ModeLabel(text[:-1], text[-1])


@dataclass(frozen=True)
class FockState:
    registry: tuple[ModeLabel, ...]
    terms: Mapping[tuple[int, ...], complex] = field(default_factory=dict)

    def __post_init__(self):
        registry = tuple(self.registry)
        if len(set(registry)) != len(registry):
            raise RegistryError("duplicate modes in registry")
        n = len(registry)
        clean = {}
        for occ, amp in self.terms.items():
            occ = tuple(int(c) for c in occ)
            if len(occ) != n:
                raise RegistryError(
                    f"occupation vector of length {len(occ)} on a {n}-mode registry")
            if any(c < 0 for c in occ):
                raise ValueError(f"negative occupation in {occ}")
            amp = complex(amp)
            if abs(amp) >= PRUNE_TOL:
                clean[occ] = amp
        object.__setattr__(self, "registry", registry)
        object.__setattr__(self, "terms", clean)

    # -- basic queries -----------------------------------------------------

    def __len__(self):
        return len(self.terms)

    def __iter__(self):
        return iter(sorted(self.terms.items()))

    def amplitude(self, occ: Sequence[int]) -> complex:
        return self.terms.get(tuple(occ), 0j)

    def index(self, mode: ModeLabel | str) -> int:
        if isinstance(mode, str):
            mode = parse_mode(mode)
        try:
            return self.registry.index(mode)
        except ValueError:
            raise RegistryError(f"mode {mode} not in registry") from None

    @property
    def spatials(self) -> tuple[str, ...]:
        seen = []
        for m in self.registry:
            if m.spatial not in seen:
                seen.append(m.spatial)
        return tuple(seen)

    def norm_sq(self) -> float:
        return float(sum(abs(a) ** 2 for a in self.terms.values()))

    @property
    def normalized(self) -> bool:
        return abs(self.norm_sq() - 1.0) < NORM_TOL

    def photon_numbers(self) -> set[int]:
        return {sum(occ) for occ in self.terms}

    def counts(self, occ: Sequence[int]) -> dict[ModeLabel, int]:
        """Read an occupation vector back as a mode -> count mapping."""
        return {m: c for m, c in zip(self.registry, occ) if c}

    def __mul__(self, scalar):
        return FockState(self.registry, {k: scalar * v for k, v in self.terms.items()})

    __rmul__ = __mul__

    def __add__(self, other):
        return scale_add([(1.0, self), (1.0, other)])

    def __sub__(self, other):
        return scale_add([(1.0, self), (-1.0, other)])

    # -- registry surgery --------------------------------------------------

    def embed(self, registry: Sequence[ModeLabel]) -> FockState:
        """Re-express on a registry containing this one; extra modes are vacuum.

        Modes present here but absent from ``registry`` must be empty.
        """
        registry = tuple(registry)
        pos = {m: i for i, m in enumerate(registry)}
        for j, m in enumerate(self.registry):
            if m not in pos and any(occ[j] for occ in self.terms):
                raise RegistryError(f"mode {m} is occupied but absent from target registry")
        terms = {}
        for occ, amp in self.terms.items():
            new = [0] * len(registry)
            for m, c in zip(self.registry, occ):
                if c:
                    new[pos[m]] = c
            terms[tuple(new)] = amp
        return FockState(registry, terms)

    def restrict(self, spatials: Iterable[str]) -> FockState:
        """Keep only the given spatial modes, in the given order."""
        return self.embed(make_registry(spatials))

    def strip(self, spatial: str) -> FockState:
        """Remove a spatial mode whose occupation is the same in every term.

        Such a mode factors out of the state as a tensor product, so dropping
        it leaves a well-defined state on the remaining modes.
        """
        idx = [i for i, m in enumerate(self.registry) if m.spatial == spatial]
        if not idx:
            raise RegistryError(f"spatial mode {spatial!r} not in registry")
        values = {tuple(occ[i] for i in idx) for occ in self.terms}
        if len(values) > 1:
            raise ValueError(f"mode {spatial!r} is entangled with the rest; cannot strip")
        keep = [i for i in range(len(self.registry)) if i not in idx]
        return FockState(tuple(self.registry[i] for i in keep),
                         {tuple(occ[i] for i in keep): a for occ, a in self.terms.items()})

    def drop_empty(self) -> FockState:
        """Remove every spatial mode that is vacuum in all terms."""
        keep = [s for s in self.spatials
                if any(occ[i] for occ in self.terms
                       for i, m in enumerate(self.registry) if m.spatial == s)]
        return self.restrict(keep)

    def to_dump(self) -> str:
        """One line per term, ``<counts> <re> <im>``, sorted by occupation."""
        lines = []
        for occ, amp in sorted(self.terms.items()):
            lines.append("{} {} {}".format(
                ",".join(str(c) for c in occ),
                format(amp.real + 0.0, ".17g"), format(amp.imag + 0.0, ".17g")))
        return "\n".join(lines) + ("\n" if lines else "")


def make_number_state(registry: Sequence[ModeLabel], counts: Sequence[int]) -> FockState:
    registry = tuple(registry)
    if len(counts) != len(registry):
        raise RegistryError(
            f"{len(counts)} counts given for a registry of {len(registry)} modes")
    return FockState(registry, {tuple(counts): 1.0})


def number_state(registry: Sequence[ModeLabel], occupation: Mapping[str | ModeLabel, int]) -> FockState:
    """Number state from a sparse ``{"0H": 2, ...}`` occupation mapping."""
    registry = tuple(registry)
    counts = [0] * len(registry)
    for mode, n in occupation.items():
        if isinstance(mode, str):
            mode = parse_mode(mode)
        try:
            counts[registry.index(mode)] += int(n)
        except ValueError:
            raise RegistryError(f"mode {mode} not in registry") from None
    return make_number_state(registry, counts)


def vacuum(registry: Sequence[ModeLabel]) -> FockState:
    return make_number_state(registry, [0] * len(registry))


def _check_same(a: FockState, b: FockState):
    if a.registry != b.registry:
        raise RegistryError("states live on different registries")


def inner_product(a: FockState, b: FockState) -> complex:
    """<a|b>, conjugate-linear in ``a``."""
    _check_same(a, b)
    if len(a.terms) > len(b.terms):
        return complex(sum(a.terms[k].conjugate() * v for k, v in b.terms.items() if k in a.terms))
    return complex(sum(v.conjugate() * b.terms[k] for k, v in a.terms.items() if k in b.terms))


def scale_add(states: Sequence[tuple[complex, FockState]]) -> FockState:
    if not states:
        raise ValueError("scale_add needs at least one state")
    registry = states[0][1].registry
    acc: dict[tuple[int, ...], complex] = {}
    for coeff, st in states:
        if st.registry != registry:
            raise RegistryError("states live on different registries")
        for k, v in st.terms.items():
            acc[k] = acc.get(k, 0j) + coeff * v
    return FockState(registry, acc)


def normalize(state: FockState) -> tuple[FockState, float]:
    """Return the normalized state and the original squared norm."""
    nsq = state.norm_sq()
    if nsq < DEGENERATE_NORM:
        raise DegenerateStateError("cannot normalize a zero-norm state")
    return state * (1.0 / math.sqrt(nsq)), nsq


def random_state(registry: Sequence[ModeLabel], n_photons: int, n_terms: int,
                 rng: np.random.Generator) -> FockState:
    """Random normalized state with ``n_terms`` distinct ``n_photons`` kets."""
    registry = tuple(registry)
    d = len(registry)
    terms = {}
    while len(terms) < n_terms:
        occ = np.bincount(rng.integers(0, d, size=n_photons), minlength=d)
        terms[tuple(int(c) for c in occ)] = complex(rng.normal(), rng.normal())
    return normalize(FockState(registry, terms))[0]
