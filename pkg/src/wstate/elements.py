"""Linear optical elements acting on creation operators.

Every element is turned into a :class:`ModeMap`, a square matrix over the
registry's ``(spatial, polarization)`` creation operators: column ``i`` holds
the image of ``a_i^dagger``. Beam splitters and attenuators are completed to
unitaries by routing an otherwise-unused port (vacuum in any well-ordered
circuit), so every map stays unitary.

Numeric fields of the specs may be numpy arrays of a common shape; the maps
then carry leading batch axes, which :func:`transfer_matrix` and
:func:`output_amplitude` understand. :func:`apply_mode_map` needs scalars.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence, Union

import numpy as np

from .fock import FockState, ModeLabel, RegistryError

UNITARY_TOL = 1e-12


def _arr(x):
    return np.asarray(x, dtype=float)


def _require(cond, msg):
    if not np.all(cond):
        raise ValueError(msg)


@dataclass(frozen=True)
class BeamSplitterSpec:
    """Splits ``input`` into a reflected and a transmitted spatial mode.

    ``phi``/``psi`` are the extra phases picked up by V light on reflection
    and transmission; H light sees the real amplitudes only.
    """

    input: str
    reflected: str
    transmitted: str
    r_H: float
    t_H: float
    r_V: float
    t_V: float
    phi: float = 0.0
    psi: float = 0.0

    def __post_init__(self):
        labels = {self.input, self.reflected, self.transmitted}
        if len(labels) != 3:
            raise ValueError("beam splitter ports must be three distinct spatial modes")
        for name in ("r_H", "t_H", "r_V", "t_V"):
            v = _arr(getattr(self, name))
            _require(np.isfinite(v) & (v >= 0) & (v <= 1), f"{name} must lie in [0, 1]")
        for r, t, pol in ((self.r_H, self.t_H, "H"), (self.r_V, self.t_V, "V")):
            _require(np.abs(_arr(r) ** 2 + _arr(t) ** 2 - 1) < 1e-12,
                     f"r_{pol}^2 + t_{pol}^2 must equal 1")
        _require(np.isfinite(_arr(self.phi)) & np.isfinite(_arr(self.psi)), "phases must be finite")

    @classmethod
    def from_reflectivity(cls, input, reflected, transmitted, r2_H, r2_V=None,
                          phi=0.0, psi=0.0):
        """Build from intensity reflectivities ``r^2`` (V defaults to H)."""
        r2_H = _arr(r2_H)
        r2_V = r2_H if r2_V is None else _arr(r2_V)
        for v in (r2_H, r2_V):
            _require(np.isfinite(v) & (v >= 0) & (v <= 1), "reflectivity r^2 must lie in [0, 1]")
        sq = lambda x: np.sqrt(x) if np.ndim(x) else math.sqrt(float(x))
        return cls(str(input), str(reflected), str(transmitted),
                   sq(r2_H), sq(1 - r2_H), sq(r2_V), sq(1 - r2_V), phi, psi)

    @property
    def spatials(self):
        return (self.input, self.reflected, self.transmitted)


@dataclass(frozen=True)
class PhaseShifterSpec:
    """Birefringent phase: multiplies V light in ``target`` by ``exp(i theta_V)``."""

    target: str
    theta_V: float

    def __post_init__(self):
        _require(np.isfinite(_arr(self.theta_V)), "theta_V must be finite")

    @property
    def spatials(self):
        return (self.target,)


@dataclass(frozen=True)
class RotatorSpec:
    """Polarization rotation by ``angle`` radians (pi/2 swaps H and V)."""

    target: str
    angle: float

    def __post_init__(self):
        _require(np.isfinite(_arr(self.angle)), "angle must be finite")

    @property
    def spatials(self):
        return (self.target,)


@dataclass(frozen=True)
class AttenuatorSpec:
    """Polarization dependent loss, dilated into a dedicated ``aux`` mode."""

    target: str
    amp_H: float
    amp_V: float
    aux: str

    def __post_init__(self):
        if self.target == self.aux:
            raise ValueError("attenuator aux mode must differ from its target")
        for name in ("amp_H", "amp_V"):
            v = _arr(getattr(self, name))
            _require(np.isfinite(v) & (v >= 0) & (v <= 1), f"{name} must lie in [0, 1]")

    @property
    def spatials(self):
        return (self.target, self.aux)


Element = Union[BeamSplitterSpec, PhaseShifterSpec, RotatorSpec, AttenuatorSpec]


@dataclass(frozen=True, eq=False)
class ModeMap:
    registry: tuple[ModeLabel, ...]
    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        d = len(self.registry)
        if m.shape[-2:] != (d, d):
            raise RegistryError(f"mode map of shape {m.shape} on a {d}-mode registry")
        object.__setattr__(self, "registry", tuple(self.registry))
        object.__setattr__(self, "matrix", m)

    @property
    def batched(self) -> bool:
        return self.matrix.ndim > 2

    def unitarity_error(self) -> float:
        m = self.matrix
        eye = np.eye(m.shape[-1])
        return float(np.max(np.abs(m @ np.conj(np.swapaxes(m, -1, -2)) - eye)))

    def is_unitary(self, tol: float = UNITARY_TOL) -> bool:
        return self.unitarity_error() < tol

    def then(self, other: ModeMap) -> ModeMap:
        """Map for applying ``self`` first and ``other`` second."""
        if other.registry != self.registry:
            raise RegistryError("cannot compose maps on different registries")
        return ModeMap(self.registry, other.matrix @ self.matrix)

    @classmethod
    def identity(cls, registry):
        return cls(tuple(registry), np.eye(len(registry), dtype=complex))


def _index(registry, spatial, pol):
    try:
        return registry.index(ModeLabel(spatial, pol))
    except ValueError:
        raise RegistryError(f"mode {spatial}{pol} not in registry") from None


def _batch_shape(*values):
    return np.broadcast_shapes(*(np.shape(v) for v in values))


def to_mode_map(element: Element, registry: Sequence[ModeLabel]) -> ModeMap:
    registry = tuple(registry)
    d = len(registry)
    if isinstance(element, BeamSplitterSpec):
        e = element
        shape = _batch_shape(e.r_H, e.t_H, e.r_V, e.t_V, e.phi, e.psi)
        m = np.broadcast_to(np.eye(d, dtype=complex), shape + (d, d)).copy()
        for pol, r, t, ph_r, ph_t in (("H", e.r_H, e.t_H, 0.0, 0.0),
                                      ("V", e.r_V, e.t_V, e.phi, e.psi)):
            i = _index(registry, e.input, pol)
            a = _index(registry, e.reflected, pol)
            b = _index(registry, e.transmitted, pol)
            r, t = _arr(r), _arr(t)
            er, et = np.exp(1j * _arr(ph_r)), np.exp(1j * _arr(ph_t))
            for col in (i, a, b):
                m[..., :, col] = 0
            m[..., a, i] = r * er
            m[..., b, i] = t * et
            # unused port of the splitter enters through the transmitted label
            m[..., a, b] = -t * er
            m[..., b, b] = r * et
            # the reflected label's own (empty) input is routed back to the input path
            m[..., i, a] = 1
        return ModeMap(registry, m)
    if isinstance(element, PhaseShifterSpec):
        shape = np.shape(element.theta_V)
        m = np.broadcast_to(np.eye(d, dtype=complex), shape + (d, d)).copy()
        v = _index(registry, element.target, "V")
        m[..., v, v] = np.exp(1j * _arr(element.theta_V))
        return ModeMap(registry, m)
    if isinstance(element, RotatorSpec):
        shape = np.shape(element.angle)
        m = np.broadcast_to(np.eye(d, dtype=complex), shape + (d, d)).copy()
        h = _index(registry, element.target, "H")
        v = _index(registry, element.target, "V")
        c, s = np.cos(_arr(element.angle)), np.sin(_arr(element.angle))
        m[..., h, h] = c
        m[..., v, h] = s
        m[..., h, v] = -s
        m[..., v, v] = c
        return ModeMap(registry, m)
    if isinstance(element, AttenuatorSpec):
        e = element
        shape = _batch_shape(e.amp_H, e.amp_V)
        m = np.broadcast_to(np.eye(d, dtype=complex), shape + (d, d)).copy()
        for pol, amp in (("H", e.amp_H), ("V", e.amp_V)):
            i = _index(registry, e.target, pol)
            x = _index(registry, e.aux, pol)
            amp = _arr(amp)
            leak = np.sqrt(np.clip(1 - amp ** 2, 0, None))
            m[..., i, i] = amp
            m[..., x, i] = leak
            m[..., i, x] = -leak
            m[..., x, x] = amp
        return ModeMap(registry, m)
    raise TypeError(f"not an optical element: {element!r}")


# -- exact application by creation-operator substitution ---------------------

@lru_cache(maxsize=None)
def _compositions(n: int, k: int) -> tuple[tuple[int, ...], ...]:
    """All ways to write ``n`` as an ordered sum of ``k`` non-negative parts."""
    if k == 1:
        return ((n,),)
    return tuple((first,) + rest for first in range(n, -1, -1)
                 for rest in _compositions(n - first, k - 1))


def _column_expansions(matrix: np.ndarray, mode: int, n: int):
    """Expand ``(sum_j M[j, mode] a_j^dag)^n`` into monomials.

    Returns ``[(((j, k), ...), coeff), ...]`` with multinomial weights included.
    """
    col = matrix[:, mode]
    targets = [j for j in range(len(col)) if col[j] != 0]
    if not targets:
        return []
    out = []
    for comp in _compositions(n, len(targets)):
        coeff = math.factorial(n)
        for j, k in zip(targets, comp):
            coeff = coeff / math.factorial(k) * col[j] ** k
        out.append((tuple((j, k) for j, k in zip(targets, comp) if k), coeff))
    return out


def apply_mode_map(state: FockState, mode_map: ModeMap) -> FockState:
    """Apply a scalar ModeMap by substituting every creation operator."""
    if mode_map.registry != state.registry:
        raise RegistryError("mode map and state use different registries")
    if mode_map.batched:
        raise ValueError("apply_mode_map needs an unbatched mode map")
    m = mode_map.matrix
    d = len(state.registry)
    cache = {}
    out: dict[tuple[int, ...], complex] = {}
    for occ, amp in state.terms.items():
        # partial products: output occupation -> monomial coefficient
        partial = {(0,) * d: amp / math.sqrt(math.prod(math.factorial(c) for c in occ))}
        for i, n in enumerate(occ):
            if not n:
                continue
            key = (i, n)
            if key not in cache:
                cache[key] = _column_expansions(m, i, n)
            expansion = cache[key]
            nxt = {}
            for base, c in partial.items():
                for moves, w in expansion:
                    new = list(base)
                    for j, k in moves:
                        new[j] += k
                    new = tuple(new)
                    nxt[new] = nxt.get(new, 0j) + c * w
            partial = nxt
        for new, c in partial.items():
            norm = math.sqrt(math.prod(math.factorial(k) for k in new))
            out[new] = out.get(new, 0j) + c * norm
    return FockState(state.registry, out)


def apply_phase(state: FockState, spec: PhaseShifterSpec) -> FockState:
    v = state.index(ModeLabel(spec.target, "V"))
    theta = float(spec.theta_V)
    return FockState(state.registry,
                     {occ: amp * np.exp(1j * theta * occ[v]) for occ, amp in state.terms.items()})


def apply_rotator(state: FockState, spec: RotatorSpec) -> FockState:
    return apply_mode_map(state, to_mode_map(spec, state.registry))


def apply_element(state: FockState, element: Element) -> FockState:
    if isinstance(element, PhaseShifterSpec):
        return apply_phase(state, element)
    return apply_mode_map(state, to_mode_map(element, state.registry))


# -- single-shot route: transfer matrix and permanents ------------------------

def transfer_matrix(elements: Sequence[Element], registry: Sequence[ModeLabel]) -> ModeMap:
    """Compose all elements into one (possibly batched) single-photon map."""
    registry = tuple(registry)
    total = ModeMap.identity(registry)
    for el in elements:
        total = total.then(to_mode_map(el, registry))
    return total


def transfer_columns(elements: Sequence[Element], registry: Sequence[ModeLabel],
                     columns: Sequence[int]) -> np.ndarray:
    """Images of the selected input modes only: ``U[..., :, columns]``."""
    registry = tuple(registry)
    cols = np.eye(len(registry), dtype=complex)[:, list(columns)]
    for el in elements:
        cols = to_mode_map(el, registry).matrix @ cols
    return cols


@lru_cache(maxsize=None)
def _ryser_subsets(n: int):
    subsets = np.array(list(itertools.product((0, 1), repeat=n)), dtype=float)
    signs = (-1.0) ** (n - subsets.sum(axis=1))
    return subsets, signs


def permanent(a: np.ndarray) -> np.ndarray:
    """Permanent over the last two axes (Ryser's inclusion-exclusion formula)."""
    a = np.asarray(a)
    n = a.shape[-1]
    if a.shape[-2] != n:
        raise ValueError("permanent needs square matrices")
    if n == 0:
        return np.ones(a.shape[:-2], dtype=a.dtype)
    subsets, signs = _ryser_subsets(n)
    row_sums = a @ subsets.T  # (..., n, 2^n)
    return np.prod(row_sums, axis=-2) @ signs


def output_amplitude(matrix: np.ndarray, inputs: Sequence[int], outputs: Sequence[int]):
    """<outputs| U |inputs> for occupation vectors over the map's registry.

    ``matrix`` may also hold just the columns listed by ``inputs`` (so
    ``len(inputs)`` equals its column count).
    """
    cols = [i for i, n in enumerate(inputs) for _ in range(n)]
    rows = [j for j, k in enumerate(outputs) for _ in range(k)]
    if len(rows) != len(cols):
        return np.zeros(np.shape(matrix)[:-2], dtype=complex)
    sub = np.asarray(matrix)[..., rows, :][..., :, cols]
    norm = math.sqrt(math.prod(math.factorial(n) for n in inputs)
                     * math.prod(math.factorial(k) for k in outputs))
    return permanent(sub) / norm
