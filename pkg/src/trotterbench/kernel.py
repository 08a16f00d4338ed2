"""Metropolis sweep engine for one layered system.

A sweep walks a fixed phase schedule.  Sites are greedily coloured on the
qubit interaction graph and layers are split by parity, so members of one
phase never interact and can be updated by independent lanes.  Site ``i``
belongs to lane ``i % lanes``; a lane visits its coordinates of a phase in
(layer, site) order and draws exactly one uniform per coordinate from RNG
lane ``(chain, lane)``.  After each phase the per-lane energy changes are
folded into the running energy in lane order.  Any executor honouring those
rules reproduces the same spins, flip counts and energy bit for bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _accel
from ._accel import njit
from .model import LayeredSystem, total_energy
from .rng import NN, RngState, TWO_32, lane_fill_np, lane_twist_jit, temper_jit


class ScheduleMismatchError(ValueError):
    pass


@dataclass(frozen=True)
class SweepStats:
    examined: int
    flipped: int
    energy: float


@dataclass(frozen=True)
class PointResult:
    spins: np.ndarray
    flips: int
    energy: float
    flip_counts: np.ndarray


@dataclass(eq=False)
class UpdateSchedule:
    """Phase-ordered coordinate lists.

    Coordinates are stored flat; segment ``p * lanes + t`` holds lane ``t``'s
    share of phase ``p`` and spans ``seg_ptr[s]:seg_ptr[s + 1]``.
    """

    layers: int
    sites: int
    lanes: int
    colors: np.ndarray
    layer_class: np.ndarray
    phase_keys: tuple[tuple[int, int], ...]
    seg_ptr: np.ndarray
    c_layer: np.ndarray
    c_site: np.ndarray

    @property
    def n_phases(self) -> int:
        return len(self.phase_keys)

    @property
    def n_colors(self) -> int:
        return int(self.colors.max()) + 1

    def segment(self, phase: int, lane: int) -> list[tuple[int, int]]:
        s = phase * self.lanes + lane
        a, b = self.seg_ptr[s], self.seg_ptr[s + 1]
        return list(zip(self.c_layer[a:b].tolist(), self.c_site[a:b].tolist()))

    @property
    def phases(self) -> list[set[tuple[int, int]]]:
        out = []
        for p in range(self.n_phases):
            a, b = self.seg_ptr[p * self.lanes], self.seg_ptr[(p + 1) * self.lanes]
            out.append(set(zip(self.c_layer[a:b].tolist(), self.c_site[a:b].tolist())))
        return out

    def thread_of(self, layer: int, site: int) -> int:
        return site % self.lanes

    def check(self, system: LayeredSystem) -> None:
        if (self.layers, self.sites) != (system.layers, system.sites):
            raise ScheduleMismatchError(
                f"schedule built for {self.layers}x{self.sites}, "
                f"system is {system.layers}x{system.sites}")


@dataclass(eq=False)
class NeighborTable:
    """Intra-layer adjacency in CSR form, neighbours in ascending site order."""

    ptr: np.ndarray
    idx: np.ndarray
    w: np.ndarray

    @classmethod
    def build(cls, sites: int, coup_i, coup_j, weights) -> "NeighborTable":
        ci = np.asarray(coup_i, dtype=np.int64)
        cj = np.asarray(coup_j, dtype=np.int64)
        wv = np.asarray(weights, dtype=np.float64)
        src = np.concatenate([ci, cj])
        dst = np.concatenate([cj, ci])
        wt = np.concatenate([wv, wv])
        order = np.lexsort((dst, src))
        ptr = np.zeros(sites + 1, dtype=np.int64)
        np.cumsum(np.bincount(src, minlength=sites), out=ptr[1:])
        return cls(ptr, dst[order].astype(np.int64), wt[order])

    @classmethod
    def of(cls, system: LayeredSystem) -> "NeighborTable":
        return cls.build(system.sites, system.coup_i, system.coup_j, system.jeff)

    def padded(self) -> tuple[np.ndarray, np.ndarray]:
        """Dense (sites, max_degree) tables; padding has weight 0 and points at site 0."""
        n = self.ptr.size - 1
        deg = np.diff(self.ptr)
        width = int(deg.max()) if n else 0
        pad_idx = np.zeros((n, width), dtype=np.int64)
        pad_w = np.zeros((n, width), dtype=np.float64)
        col = np.arange(self.idx.size) - np.repeat(self.ptr[:-1], deg)
        row = np.repeat(np.arange(n), deg)
        pad_idx[row, col] = self.idx
        pad_w[row, col] = self.w
        return pad_idx, pad_w


# -- schedule construction ------------------------------------------------------------

def greedy_colors(sites: int, coup_i, coup_j) -> np.ndarray:
    adj: list[set[int]] = [set() for _ in range(sites)]
    for i, j in zip(np.asarray(coup_i).tolist(), np.asarray(coup_j).tolist()):
        adj[i].add(j)
        adj[j].add(i)
    colors = np.full(sites, -1, dtype=np.int64)
    for i in range(sites):
        taken = {colors[j] for j in adj[i] if colors[j] >= 0}
        c = 0
        while c in taken:
            c += 1
        colors[i] = c
    return colors


def layer_classes(layers: int) -> np.ndarray:
    """Parity classes; an odd ring puts its last layer in a third class."""
    cls = np.arange(layers) % 2
    if layers % 2:
        cls[-1] = 2 if layers > 1 else 0
    return cls


def color_sites(system: LayeredSystem, lanes: int = 1) -> UpdateSchedule:
    if lanes < 1:
        raise ValueError(f"lanes must be >= 1, got {lanes}")
    K, N = system.layers, system.sites
    colors = greedy_colors(N, system.coup_i, system.coup_j)
    lclass = layer_classes(K)
    keys = []
    seg_sizes = []
    layer_parts = []
    site_parts = []
    lane_of = np.arange(N) % lanes
    for q in range(int(colors.max()) + 1):
        for c in range(int(lclass.max()) + 1):
            ks = np.flatnonzero(lclass == c)
            keys.append((q, c))
            for t in range(lanes):
                sites_t = np.flatnonzero((colors == q) & (lane_of == t))
                layer_parts.append(np.repeat(ks, sites_t.size))
                site_parts.append(np.tile(sites_t, ks.size))
                seg_sizes.append(ks.size * sites_t.size)
    seg_ptr = np.zeros(len(seg_sizes) + 1, dtype=np.int64)
    np.cumsum(seg_sizes, out=seg_ptr[1:])
    return UpdateSchedule(K, N, lanes, colors, lclass, tuple(keys), seg_ptr,
                          np.concatenate(layer_parts).astype(np.int64),
                          np.concatenate(site_parts).astype(np.int64))


# -- scalar rules ------------------------------------------------------------------------

def flip_delta(system: LayeredSystem, layer: int, site: int,
               neighbors: NeighborTable | None = None) -> float:
    """Energy change from flipping spin (layer, site); does not mutate."""
    nt = neighbors if neighbors is not None else NeighborTable.of(system)
    s = system.spins
    K = system.layers
    field = 0.0
    for r in range(nt.ptr[site], nt.ptr[site + 1]):
        field += float(nt.w[r]) * int(s[layer, nt.idx[r]])
    field += float(system.heff[site])
    field += system.jperp * (int(s[(layer - 1) % K, site]) + int(s[(layer + 1) % K, site]))
    return 2.0 * int(s[layer, site]) * field


def accept(delta: float, beta_unit: float, u: float) -> bool:
    """Metropolis rule: downhill always, uphill with probability exp(-beta_unit * delta)."""
    if not 0.0 <= u < 1.0:
        raise ValueError(f"u must lie in [0, 1), got {u}")
    return delta <= 0.0 or u < math.exp(-beta_unit * delta)


# -- numba path ----------------------------------------------------------------------------

@njit
def segment_jit(spins, flips, ptr, idx, w, heff, jperp, a, b, c_layer, c_site,
                mt, mti, chain, thread, threads):
    K = spins.shape[0]
    lane = chain * threads + thread
    base = chain * threads * NN + thread
    cursor = mti[lane]
    nflip = 0
    de = 0.0
    for n in range(a, b):
        k = c_layer[n]
        i = c_site[n]
        field = 0.0
        for r in range(ptr[i], ptr[i + 1]):
            field += w[r] * spins[k, idx[r]]
        field += heff[i]
        km = k - 1 if k > 0 else K - 1
        kp = k + 1 if k < K - 1 else 0
        field += jperp * (spins[km, i] + spins[kp, i])
        d = 2.0 * spins[k, i] * field
        if cursor >= NN:
            lane_twist_jit(mt, base, threads)
            cursor = 0
        u = temper_jit(mt[base + cursor * threads]) / 4294967296.0
        cursor += 1
        if d <= 0.0 or u < math.exp(-d):
            spins[k, i] = -spins[k, i]
            flips[k, i] += 1
            nflip += 1
            de += d
    mti[lane] = cursor
    return nflip, de


@njit
def sweeps_jit(spins, flips, ptr, idx, w, heff, jperp, seg_ptr, c_layer, c_site, lanes,
               mt, mti, chain, threads, sweeps, energy, per_sweep):
    # segment_jit's body, inlined: a jit-to-jit call per segment costs more
    # than the segment itself on small layers
    K = spins.shape[0]
    n_seg = seg_ptr.shape[0] - 1
    total = 0
    for sw in range(sweeps):
        nflip = 0
        for s in range(n_seg):
            a = seg_ptr[s]
            b = seg_ptr[s + 1]
            if a == b:
                continue
            lane = chain * threads + s % lanes
            base = chain * threads * NN + s % lanes
            cursor = mti[lane]
            de = 0.0
            for n in range(a, b):
                k = c_layer[n]
                i = c_site[n]
                field = 0.0
                for r in range(ptr[i], ptr[i + 1]):
                    field += w[r] * spins[k, idx[r]]
                field += heff[i]
                km = k - 1 if k > 0 else K - 1
                kp = k + 1 if k < K - 1 else 0
                field += jperp * (spins[km, i] + spins[kp, i])
                d = 2.0 * spins[k, i] * field
                if cursor >= NN:
                    lane_twist_jit(mt, base, threads)
                    cursor = 0
                u = temper_jit(mt[base + cursor * threads]) / 4294967296.0
                cursor += 1
                if d <= 0.0 or u < math.exp(-d):
                    spins[k, i] = -spins[k, i]
                    flips[k, i] += 1
                    nflip += 1
                    de += d
            mti[lane] = cursor
            energy += de
        if per_sweep.shape[0] > 0:
            per_sweep[sw] = nflip
        total += nflip
    return total, energy


@njit
def histogram_jit(spins, flips, ptr, idx, w, heff, jperp, seg_ptr, c_layer, c_site, lanes,
                  mt, mti, chain, threads, sweeps, energy, hist, energies):
    K, N = spins.shape
    no_trace = np.zeros(0, dtype=np.int64)
    for sw in range(sweeps):
        _, energy = sweeps_jit(spins, flips, ptr, idx, w, heff, jperp, seg_ptr, c_layer, c_site,
                               lanes, mt, mti, chain, threads, 1, energy, no_trace)
        code = 0
        for k in range(K):
            for i in range(N):
                if spins[k, i] > 0:
                    code |= 1 << (k * N + i)
        hist[code] += 1
        energies[sw] = energy
    return energy


# -- numpy path ------------------------------------------------------------------------------

def segment_np(spins, flips, pad_idx, pad_w, heff, jperp, a, b, c_layer, c_site,
               mt, mti, chain, thread, threads):
    if a == b:
        return 0, 0.0
    K = spins.shape[0]
    k = c_layer[a:b]
    i = c_site[a:b]
    # same summation order as the scalar kernel; zero-weight padding is exact
    field = np.zeros(b - a)
    for r in range(pad_idx.shape[1]):
        field += pad_w[i, r] * spins[k, pad_idx[i, r]]
    field += heff[i]
    field += jperp * (spins[(k - 1) % K, i] + spins[(k + 1) % K, i])
    d = 2.0 * spins[k, i] * field
    raw = np.empty(b - a, dtype=np.uint32)
    lane_fill_np(mt, mti, chain, thread, threads, raw)
    u = raw / TWO_32
    ok = d <= 0.0
    up = np.flatnonzero(~ok)
    if up.size:
        thr = np.exp(-d[up])
        hit = u[up] < thr
        # np.exp may differ from libm in the last bits; settle near-ties with math.exp
        near = np.flatnonzero(np.abs(u[up] - thr) <= 1e-12 * thr)
        for m in near:
            hit[m] = u[up[m]] < math.exp(-d[up[m]])
        ok[up] = hit
    kk, ii = k[ok], i[ok]
    spins[kk, ii] = -spins[kk, ii]
    flips[kk, ii] += 1
    acc = d[ok]
    de = float(np.add.accumulate(acc)[-1]) if acc.size else 0.0
    return int(acc.size), de


def sweeps_np(spins, flips, ptr, idx, w, heff, jperp, seg_ptr, c_layer, c_site, lanes,
              mt, mti, chain, threads, sweeps, energy, per_sweep):
    pad_idx, pad_w = NeighborTable(ptr, idx, w).padded()
    total = 0
    n_seg = seg_ptr.shape[0] - 1
    for sw in range(sweeps):
        nflip = 0
        for s in range(n_seg):
            nf, de = segment_np(spins, flips, pad_idx, pad_w, heff, jperp, seg_ptr[s], seg_ptr[s + 1],
                                c_layer, c_site, mt, mti, chain, s % lanes, threads)
            nflip += nf
            energy += de
        if per_sweep.shape[0] > 0:
            per_sweep[sw] = nflip
        total += nflip
    return total, energy


def histogram_np(spins, flips, ptr, idx, w, heff, jperp, seg_ptr, c_layer, c_site, lanes,
                 mt, mti, chain, threads, sweeps, energy, hist, energies):
    K, N = spins.shape
    weights = (1 << np.arange(K * N, dtype=np.int64)).reshape(K, N)
    no_trace = np.zeros(0, dtype=np.int64)
    for sw in range(sweeps):
        _, energy = sweeps_np(spins, flips, ptr, idx, w, heff, jperp, seg_ptr, c_layer, c_site,
                              lanes, mt, mti, chain, threads, 1, energy, no_trace)
        hist[int(weights[spins > 0].sum())] += 1
        energies[sw] = energy
    return energy


def sweeps_impl():
    return sweeps_jit if _accel.USE_JIT else sweeps_np


def segment_impl():
    return segment_jit if _accel.USE_JIT else segment_np


# -- public operations --------------------------------------------------------------------------

def _check_rng(schedule: UpdateSchedule, rng: RngState, chain: int) -> None:
    if not rng.initialized:
        raise ValueError("RNG state used before mt_init")
    if not 0 <= chain < rng.chains:
        raise ValueError(f"chain {chain} outside RNG with {rng.chains} chains")
    if rng.threads < schedule.lanes:
        raise ValueError(f"schedule uses {schedule.lanes} lanes, RNG has {rng.threads} threads")


def run_point(system: LayeredSystem, sweeps: int, schedule: UpdateSchedule, rng: RngState,
              chain: int, energy: float | None = None, flip_counts: np.ndarray | None = None,
              per_sweep: np.ndarray | None = None) -> PointResult:
    """Apply ``sweeps`` sweeps to ``system`` in place.

    ``energy`` seeds the incremental total (recomputed from scratch when
    omitted); ``flip_counts`` accumulates per-spin flips across calls.
    """
    if sweeps < 0:
        raise ValueError(f"sweeps must be >= 0, got {sweeps}")
    schedule.check(system)
    _check_rng(schedule, rng, chain)
    if energy is None:
        energy = total_energy(system)
    if flip_counts is None:
        flip_counts = np.zeros((system.layers, system.sites), dtype=np.int64)
    if per_sweep is None:
        per_sweep = np.zeros(0, dtype=np.int64)
    nt = NeighborTable.of(system)
    total, energy = sweeps_impl()(
        system.spins, flip_counts, nt.ptr, nt.idx, nt.w, system.heff, float(system.jperp),
        schedule.seg_ptr, schedule.c_layer, schedule.c_site, schedule.lanes,
        rng.mt, rng.mti, chain, rng.threads, sweeps, float(energy), per_sweep)
    return PointResult(system.spins.copy(), int(total), float(energy), flip_counts)


def sweep(system: LayeredSystem, schedule: UpdateSchedule, rng: RngState, chain: int,
          energy: float | None = None) -> SweepStats:
    res = run_point(system, 1, schedule, rng, chain, energy)
    return SweepStats(system.variable_count, res.flips, res.energy)


def sample_states(system: LayeredSystem, schedule: UpdateSchedule, rng: RngState, chain: int,
                  sweeps: int) -> tuple[np.ndarray, np.ndarray]:
    """Histogram of whole-system states after each sweep, plus the energy trace.

    State code: bit ``k * N + i`` is set when spin (k, i) is +1.
    """
    nvar = system.variable_count
    if nvar > 24:
        raise ValueError(f"{nvar} spins is too many to histogram exhaustively")
    schedule.check(system)
    _check_rng(schedule, rng, chain)
    nt = NeighborTable.of(system)
    hist = np.zeros(1 << nvar, dtype=np.int64)
    energies = np.empty(sweeps, dtype=np.float64)
    fn = histogram_jit if _accel.USE_JIT else histogram_np
    flips = np.zeros((system.layers, system.sites), dtype=np.int64)
    fn(system.spins, flips, nt.ptr, nt.idx, nt.w, system.heff, float(system.jperp),
       schedule.seg_ptr, schedule.c_layer, schedule.c_site, schedule.lanes,
       rng.mt, rng.mti, chain, rng.threads, sweeps, total_energy(system), hist, energies)
    return hist, energies


def warm_up() -> None:
    """Compile (or load from cache) the jit kernels on a 2x2 system; no-op without jit."""
    if not _accel.USE_JIT:
        return
    from .rng import mt_alloc, mt_fill_u32, mt_init

    mt_fill_u32(mt_init(mt_alloc(1, 1), 0), 0, 0, 1)
    spins = np.ones((2, 2), dtype=np.int32)
    system = LayeredSystem(2, 2, spins, np.array([0], dtype=np.int32), np.array([1], dtype=np.int32),
                           np.array([0.1]), np.zeros(2), 0.5)
    rng = mt_init(mt_alloc(1, 1), 0)
    run_point(system, 1, color_sites(system, 1), rng, 0)
