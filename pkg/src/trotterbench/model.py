"""Problem instances, annealing schedules and the Trotter-layered classical system.

Energy convention for a layered system with K layers of N sites::

    E = - sum_k sum_(i<j) Jeff_ij s_i^k s_j^k
        - sum_k sum_i     heff_i  s_i^k
        - Jperp sum_k sum_i s_i^k s_i^((k+1) mod K)

The ring term runs over all K directed bonds, so with K = 2 the single
physical pair of layers is counted twice.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .rng import RngState, mt_fill_u32

DEFAULT_LAYERS = 128
GAMMA_FLOOR = 1e-6

# qubits -> simulation points for the published workload sizes
PRESET_POINTS = {8: 27, 16: 34, 32: 37, 48: 57, 72: 71, 96: 111, 128: 129}

_INT64_MAX = 2**63 - 1


class InstanceFormatError(ValueError):
    """Malformed instance text; ``lineno`` is 1-based."""

    def __init__(self, lineno: int, message: str):
        super().__init__(f"line {lineno}: {message}")
        self.lineno = lineno


class InstanceValidationError(ValueError):
    pass


class DomainError(ValueError):
    pass


@dataclass(frozen=True)
class Coupling:
    i: int
    j: int
    value: float


@dataclass(frozen=True)
class ProblemInstance:
    qubit_count: int
    fields: tuple[float, ...]
    couplings: tuple[Coupling, ...] = ()
    id: str = field(default="", compare=False)

    def __post_init__(self):
        n = self.qubit_count
        if n < 1:
            raise InstanceValidationError(f"qubit_count must be positive, got {n}")
        if len(self.fields) != n:
            raise InstanceValidationError(f"expected {n} fields, got {len(self.fields)}")
        seen = set()
        for c in self.couplings:
            if not (0 <= c.i < n and 0 <= c.j < n):
                raise InstanceValidationError(f"coupling ({c.i}, {c.j}) outside [0, {n})")
            if c.i >= c.j:
                raise InstanceValidationError(f"coupling ({c.i}, {c.j}) needs i < j")
            if (c.i, c.j) in seen:
                raise InstanceValidationError(f"duplicate coupling ({c.i}, {c.j})")
            seen.add((c.i, c.j))

    def coupling_arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        ci = np.array([c.i for c in self.couplings], dtype=np.int32)
        cj = np.array([c.j for c in self.couplings], dtype=np.int32)
        cv = np.array([c.value for c in self.couplings], dtype=np.float64)
        return ci, cj, cv


@dataclass(frozen=True)
class SimulationPoint:
    index: int
    s: float
    gamma: float
    beta: float

    def __post_init__(self):
        if not 0.0 <= self.s <= 1.0:
            raise ValueError(f"s must lie in [0, 1], got {self.s}")
        if self.gamma < 0:
            raise ValueError(f"gamma must be >= 0, got {self.gamma}")
        if self.beta <= 0:
            raise ValueError(f"beta must be > 0, got {self.beta}")


@dataclass(frozen=True)
class AnnealSchedule:
    points: tuple[SimulationPoint, ...]

    def __post_init__(self):
        if not self.points:
            raise ValueError("schedule needs at least one point")
        for p, pt in enumerate(self.points):
            if pt.index != p:
                raise ValueError(f"point {p} carries index {pt.index}")
            if p and pt.s <= self.points[p - 1].s:
                raise ValueError("s must increase strictly along the schedule")

    def __len__(self):
        return len(self.points)

    def __iter__(self):
        return iter(self.points)


@dataclass(eq=False)
class LayeredSystem:
    """K replicas of an N-site Ising layer coupled into a ring.

    ``spins`` is a (K, N) int32 array of +-1 and is the only mutable part.
    ``coup_i``/``coup_j``/``jeff`` list the effective intra-layer couplings.
    """

    layers: int
    sites: int
    spins: np.ndarray
    coup_i: np.ndarray
    coup_j: np.ndarray
    jeff: np.ndarray
    heff: np.ndarray
    jperp: float
    point: SimulationPoint | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.spins.shape != (self.layers, self.sites):
            raise ValueError(f"spins shape {self.spins.shape} != ({self.layers}, {self.sites})")
        if not np.all(np.abs(self.spins) == 1):
            raise ValueError("spins must be exactly +-1")

    @property
    def variable_count(self) -> int:
        return self.layers * self.sites

    def layer_neighbors(self, k: int) -> tuple[int, int]:
        return (k - 1) % self.layers, (k + 1) % self.layers

    def copy(self) -> "LayeredSystem":
        return LayeredSystem(self.layers, self.sites, self.spins.copy(), self.coup_i.copy(),
                             self.coup_j.copy(), self.jeff.copy(), self.heff.copy(),
                             self.jperp, self.point)


# -- instance I/O ----------------------------------------------------------------

def _strip(line: str) -> str:
    return line.split("#", 1)[0].strip()


def _parse_index(tok: str, lineno: int) -> int:
    try:
        return int(tok)
    except ValueError:
        raise InstanceFormatError(lineno, f"bad site index {tok!r}") from None


def _parse_value(tok: str, lineno: int) -> float:
    try:
        v = float(tok)
    except ValueError:
        raise InstanceFormatError(lineno, f"bad value {tok!r}") from None
    if not math.isfinite(v):
        raise InstanceFormatError(lineno, f"non-finite value {tok!r}")
    return v


def load_instance(text: str, id: str = "") -> ProblemInstance:
    qubits = None
    fields: dict[int, float] = {}
    couplings: list[Coupling] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = _strip(raw)
        if not line:
            continue
        tok = line.split()
        key = tok[0]
        if qubits is None:
            if key != "qubits" or len(tok) != 2:
                raise InstanceFormatError(lineno, "first line must be 'qubits N'")
            qubits = _parse_index(tok[1], lineno)
            if qubits < 1:
                raise InstanceFormatError(lineno, "qubit count must be positive")
            continue
        if key == "h":
            if len(tok) != 3:
                raise InstanceFormatError(lineno, "expected 'h i value'")
            i = _parse_index(tok[1], lineno)
            if not 0 <= i < qubits:
                raise InstanceValidationError(f"line {lineno}: field index {i} outside [0, {qubits})")
            if i in fields:
                raise InstanceValidationError(f"line {lineno}: field {i} given twice")
            fields[i] = _parse_value(tok[2], lineno)
        elif key == "J":
            if len(tok) != 4:
                raise InstanceFormatError(lineno, "expected 'J i j value'")
            couplings.append(Coupling(_parse_index(tok[1], lineno), _parse_index(tok[2], lineno),
                                      _parse_value(tok[3], lineno)))
        else:
            raise InstanceFormatError(lineno, f"unknown record {key!r}")
    if qubits is None:
        raise InstanceFormatError(1, "missing 'qubits N' line")
    h = tuple(fields.get(i, 0.0) for i in range(qubits))
    return ProblemInstance(qubits, h, tuple(couplings), id)


def emit_instance(instance: ProblemInstance) -> str:
    lines = []
    if instance.id:
        lines.append(f"# {instance.id}")
    lines.append(f"qubits {instance.qubit_count}")
    for i, h in enumerate(instance.fields):
        if h != 0.0:
            lines.append(f"h {i} {h!r}")
    for c in instance.couplings:
        lines.append(f"J {c.i} {c.j} {c.value!r}")
    return "\n".join(lines) + "\n"


def generate_instance(qubits: int, coupling_seed: int, density: float = 1.0) -> ProblemInstance:
    """Random +-1 couplings on a Bernoulli(density) graph, zero fields.

    Draw procedure: ``g = numpy.random.default_rng(coupling_seed)``; with the
    P = N(N-1)/2 pairs in lexicographic order, ``keep = g.random(P) < density``
    then ``sign = 2 * g.integers(0, 2, P) - 1``.
    """
    if qubits < 1:
        raise ValueError(f"qubits must be >= 1, got {qubits}")
    if not 0.0 < density <= 1.0:
        raise ValueError(f"density must lie in (0, 1], got {density}")
    g = np.random.default_rng(coupling_seed)
    ii, jj = np.triu_indices(qubits, k=1)
    keep = g.random(ii.size) < density
    sign = 2 * g.integers(0, 2, ii.size) - 1
    couplings = tuple(Coupling(int(i), int(j), float(v))
                      for i, j, v, k in zip(ii, jj, sign, keep) if k)
    return ProblemInstance(qubits, (0.0,) * qubits, couplings,
                           f"random-n{qubits}-seed{coupling_seed}-d{density:g}")


# -- schedules and sizes ------------------------------------------------------------

def build_schedule(point_count: int, gamma0: float = 1.0, beta: float = 1.0) -> AnnealSchedule:
    if point_count < 1:
        raise ValueError(f"point_count must be >= 1, got {point_count}")
    points = []
    for p in range(point_count):
        s = p / (point_count - 1) if point_count > 1 else 0.0
        gamma = max(gamma0 * (1.0 - s), GAMMA_FLOOR)
        points.append(SimulationPoint(p, s, gamma, beta))
    return AnnealSchedule(tuple(points))


def variable_count(qubits: int, layers: int, points: int) -> int:
    if min(qubits, layers, points) < 1:
        raise ValueError("qubits, layers and points must all be >= 1")
    total = qubits * layers * points
    if total > _INT64_MAX:
        raise OverflowError(f"{qubits} x {layers} x {points} exceeds a signed 64-bit count")
    return total


def ring_coupling(beta: float, gamma: float, layers: int) -> float:
    """Inter-layer coupling 0.5 * ln(coth(beta * gamma / K))."""
    x = beta * gamma / layers
    if not x > 0.0:
        raise DomainError(f"beta*gamma/K must be positive, got {x}")
    if x < 1.0:
        return -0.5 * math.log(math.tanh(x))
    # same quantity, stable once tanh(x) rounds to 1
    return math.atanh(math.exp(-2.0 * x))


def trotterize(instance: ProblemInstance, point: SimulationPoint, layers: int,
               rng: RngState, chain: int = 0, thread: int = 0) -> LayeredSystem:
    """Build the layered system for one simulation point.

    Spins are drawn from RNG lane ``(chain, thread)`` in (layer, site) order;
    the top bit of each raw word picks +1.
    """
    if layers < 2:
        raise ValueError(f"the layer ring needs at least 2 layers, got {layers}")
    jperp = ring_coupling(point.beta, point.gamma, layers)
    scale = point.s * point.beta / layers
    ci, cj, cv = instance.coupling_arrays()
    n = instance.qubit_count
    raw = mt_fill_u32(rng, chain, thread, layers * n)
    spins = np.where(raw >> 31, 1, -1).astype(np.int32).reshape(layers, n)
    return LayeredSystem(layers, n, spins, ci, cj, scale * cv,
                         scale * np.asarray(instance.fields, dtype=np.float64), jperp, point)


def total_energy(system: LayeredSystem) -> float:
    s = system.spins.astype(np.float64)
    intra = np.sum(system.jeff * np.sum(s[:, system.coup_i] * s[:, system.coup_j], axis=0))
    field_term = np.sum(system.heff * np.sum(s, axis=0))
    ring = np.sum(s * np.roll(s, -1, axis=0))
    return float(-intra - field_term - system.jperp * ring)


def systems_for_schedule(instance: ProblemInstance, schedule: Iterable[SimulationPoint],
                         layers: int, rng: RngState) -> list[LayeredSystem]:
    """One layered system per point; point p draws its spins from chain p, thread 0."""
    return [trotterize(instance, pt, layers, rng, chain=pt.index) for pt in schedule]


def preset_points(qubits: int) -> int | None:
    return PRESET_POINTS.get(qubits)

