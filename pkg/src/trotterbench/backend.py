"""Host-side emulation of the device: staged arena, work groups and lanes.

``transfer_in`` packs the layered systems into one contiguous byte arena
(the "device" memory), ``execute`` sweeps every group in place inside a copy
of that arena, and ``transfer_out`` copies the arena back to host bytes and
rebuilds the systems.  Arena layout, all little-endian, each section
8-byte aligned::

    header       8 x uint32   magic, version, groups, layers, sites, couplings, 0, 0
    coup_i       int32[M]     shared topology
    coup_j       int32[M]
    point        float64[G,3] (s, gamma, beta)
    heff         float64[G,N]
    jeff         float64[G,M]
    jperp        float64[G]
    energy       float64[G]   running total energy
    total_flips  int64[G]
    spins        int32[G,K,N]
    flip_counts  int64[G,K,N] per-spin flip counters
"""

from __future__ import annotations

import os
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import _accel
from .kernel import NeighborTable, UpdateSchedule, color_sites, segment_impl, sweeps_impl
from .model import LayeredSystem, SimulationPoint, total_energy
from .rng import RngState

MAGIC = 0x4253494C  # b"LISB"
VERSION = 1
HEADER_WORDS = 8
BACKENDS = ("reference", "parallel")


class MalformedBufferError(ValueError):
    pass


class RngCapacityError(ValueError):
    pass


class PlanMismatchError(ValueError):
    pass


@dataclass(frozen=True)
class ExecutionPlan:
    groups: int
    lanes_per_group: int
    backend_kind: str
    lane_threads: bool = False
    workers: int | None = None


def plan(point_count: int, lanes_per_group: int = 32, kind: str = "reference",
         lane_threads: bool = False, workers: int | None = None) -> ExecutionPlan:
    """One work group per simulation point.

    ``lane_threads`` (parallel backend only) runs every lane of a group on its
    own thread with a barrier between phases; otherwise a group is one task
    and its lanes run in order inside the compiled kernel.
    """
    if point_count < 1:
        raise ValueError(f"point_count must be >= 1, got {point_count}")
    if lanes_per_group < 1:
        raise ValueError(f"lanes_per_group must be >= 1, got {lanes_per_group}")
    if kind not in BACKENDS:
        raise ValueError(f"unknown backend {kind!r}; expected one of {BACKENDS}")
    if lane_threads and kind != "parallel":
        raise ValueError("lane_threads requires the parallel backend")
    return ExecutionPlan(point_count, lanes_per_group, kind, lane_threads, workers)


# -- arena layout ----------------------------------------------------------------------------

def _align(n: int) -> int:
    return (n + 7) & ~7


def _layout(groups: int, layers: int, sites: int, ncoup: int) -> tuple[dict, int]:
    G, K, N, M = groups, layers, sites, ncoup
    sections = [
        ("coup_i", np.int32, (M,)),
        ("coup_j", np.int32, (M,)),
        ("point", np.float64, (G, 3)),
        ("heff", np.float64, (G, N)),
        ("jeff", np.float64, (G, M)),
        ("jperp", np.float64, (G,)),
        ("energy", np.float64, (G,)),
        ("total_flips", np.int64, (G,)),
        ("spins", np.int32, (G, K, N)),
        ("flip_counts", np.int64, (G, K, N)),
    ]
    offset = HEADER_WORDS * 4
    layout = {}
    for name, dtype, shape in sections:
        offset = _align(offset)
        layout[name] = (offset, np.dtype(dtype).newbyteorder("<"), shape)
        offset += int(np.prod(shape)) * np.dtype(dtype).itemsize
    return layout, offset


def _views(arena: np.ndarray) -> tuple[dict[str, np.ndarray], tuple[int, int, int, int]]:
    if arena.nbytes < HEADER_WORDS * 4:
        raise MalformedBufferError(f"arena of {arena.nbytes} bytes is shorter than its header")
    header = arena[:HEADER_WORDS * 4].view("<u4")
    if int(header[0]) != MAGIC or int(header[1]) != VERSION:
        raise MalformedBufferError("bad arena magic or version")
    dims = tuple(int(x) for x in header[2:6])
    layout, total = _layout(*dims)
    if arena.nbytes != total:
        raise MalformedBufferError(f"arena holds {arena.nbytes} bytes, layout needs {total}")
    views = {}
    for name, (off, dtype, shape) in layout.items():
        n = int(np.prod(shape)) * dtype.itemsize
        views[name] = arena[off:off + n].view(dtype).reshape(shape)
    return views, dims


@dataclass(eq=False)
class StagedBuffers:
    arena: np.ndarray
    byte_count_in: int
    byte_count_out: int | None = None
    views: dict[str, np.ndarray] = field(init=False, repr=False)
    dims: tuple[int, int, int, int] = field(init=False)

    def __post_init__(self):
        self.views, self.dims = _views(self.arena)

    def __getattr__(self, name):
        views = self.__dict__.get("views")
        if views is not None and name in views:
            return views[name]
        raise AttributeError(name)

    @property
    def groups(self) -> int:
        return self.dims[0]

    @property
    def layers(self) -> int:
        return self.dims[1]

    @property
    def sites(self) -> int:
        return self.dims[2]

    def copy(self) -> "StagedBuffers":
        return StagedBuffers(self.arena.copy(), self.byte_count_in, self.byte_count_out)


def pack_systems(systems: Sequence[LayeredSystem], energies: Sequence[float] | None = None) -> bytes:
    """Serialize layered systems into the arena byte layout."""
    if not systems:
        raise ValueError("need at least one layered system")
    first = systems[0]
    K, N, M = first.layers, first.sites, first.coup_i.size
    for s in systems[1:]:
        if (s.layers, s.sites) != (K, N) or not (
                np.array_equal(s.coup_i, first.coup_i) and np.array_equal(s.coup_j, first.coup_j)):
            raise ValueError("all layered systems must share layers, sites and coupling topology")
    G = len(systems)
    layout, total = _layout(G, K, N, M)
    arena = np.zeros(total, dtype=np.uint8)
    arena[:HEADER_WORDS * 4].view("<u4")[:] = [MAGIC, VERSION, G, K, N, M, 0, 0]
    views, _ = _views(arena)
    views["coup_i"][:] = first.coup_i
    views["coup_j"][:] = first.coup_j
    for g, s in enumerate(systems):
        pt = s.point
        views["point"][g] = (pt.s, pt.gamma, pt.beta) if pt is not None else (np.nan,) * 3
        views["heff"][g] = s.heff
        views["jeff"][g] = s.jeff
        views["jperp"][g] = s.jperp
        views["energy"][g] = total_energy(s) if energies is None else energies[g]
        views["spins"][g] = s.spins
    return arena.tobytes()


def unpack_systems(blob: bytes) -> list[LayeredSystem]:
    arena = np.frombuffer(blob, dtype=np.uint8)
    views, (G, K, N, M) = _views(arena)
    if not np.all(np.abs(views["spins"]) == 1):
        raise MalformedBufferError("spin section holds values other than +-1")
    out = []
    for g in range(G):
        s, gamma, beta = views["point"][g]
        point = None if np.isnan(s) else SimulationPoint(g, float(s), float(gamma), float(beta))
        out.append(LayeredSystem(
            K, N, views["spins"][g].astype(np.int32), views["coup_i"].astype(np.int32),
            views["coup_j"].astype(np.int32), views["jeff"][g].astype(np.float64),
            views["heff"][g].astype(np.float64), float(views["jperp"][g]), point))
    return out


def transfer_in(systems: Sequence[LayeredSystem]) -> StagedBuffers:
    blob = pack_systems(systems)
    arena = np.frombuffer(blob, dtype=np.uint8).copy()
    return StagedBuffers(arena, byte_count_in=len(blob))


def transfer_out(buffers: StagedBuffers) -> list[LayeredSystem]:
    blob = buffers.arena.tobytes()
    systems = unpack_systems(blob)
    buffers.byte_count_out = len(blob)
    return systems


# -- execution -------------------------------------------------------------------------------

class PhaseMonitor:
    """Barrier checker for lane-threaded groups.

    Lanes report when they start and finish each phase epoch; starting epoch
    ``e`` before every lane finished ``e - 1`` is logged as a violation.
    """

    def __init__(self, lanes: int):
        self.lanes = lanes
        self._lock = threading.Lock()
        self.finished: dict[int, int] = {}
        self.started = 0
        self.violations: list[tuple[int, int]] = []

    def begin(self, lane: int, epoch: int) -> None:
        with self._lock:
            self.started += 1
            if epoch > 0 and self.finished.get(epoch - 1, 0) != self.lanes:
                self.violations.append((lane, epoch))

    def end(self, lane: int, epoch: int) -> None:
        with self._lock:
            self.finished[epoch] = self.finished.get(epoch, 0) + 1


class _GroupRun:
    def __init__(self, buffers: StagedBuffers, schedule: UpdateSchedule, g: int,
                 rng: RngState, lanes: int):
        self.g = g
        self.spins = buffers.spins[g]
        self.flips = buffers.flip_counts[g]
        self.energy_slot = buffers.energy
        self.flip_slot = buffers.total_flips
        self.schedule = schedule
        self.rng = rng
        self.lanes = lanes
        self.nt = NeighborTable.build(buffers.sites, buffers.coup_i, buffers.coup_j, buffers.jeff[g])
        self.heff = np.ascontiguousarray(buffers.heff[g])
        self.jperp = float(buffers.jperp[g])

    def run_serial(self, sweeps: int) -> None:
        sc = self.schedule
        total, energy = sweeps_impl()(
            self.spins, self.flips, self.nt.ptr, self.nt.idx, self.nt.w, self.heff, self.jperp,
            sc.seg_ptr, sc.c_layer, sc.c_site, sc.lanes, self.rng.mt, self.rng.mti, self.g,
            self.rng.threads, sweeps, float(self.energy_slot[self.g]), np.zeros(0, dtype=np.int64))
        self.energy_slot[self.g] = energy
        self.flip_slot[self.g] += total

    def run_lane_threads(self, sweeps: int) -> PhaseMonitor:
        sc = self.schedule
        T = sc.lanes
        monitor = PhaseMonitor(T)
        lane_de = [0.0] * T
        lane_nf = [0] * T
        state = {"energy": float(self.energy_slot[self.g]), "flips": 0}
        if _accel.USE_JIT:
            tables = (self.nt.ptr, self.nt.idx, self.nt.w)
        else:
            tables = self.nt.padded()
        seg_fn = segment_impl()

        def fold():
            # runs once per phase, in one thread, after all lanes arrive
            for t in range(T):
                state["energy"] += lane_de[t]
                state["flips"] += lane_nf[t]

        barrier = threading.Barrier(T, action=fold)
        errors: list[BaseException] = []

        def lane(t: int) -> None:
            try:
                epoch = 0
                for _ in range(sweeps):
                    for p in range(sc.n_phases):
                        monitor.begin(t, epoch)
                        s = p * T + t
                        nf, de = seg_fn(self.spins, self.flips, *tables, self.heff, self.jperp,
                                        sc.seg_ptr[s], sc.seg_ptr[s + 1], sc.c_layer, sc.c_site,
                                        self.rng.mt, self.rng.mti, self.g, t, self.rng.threads)
                        lane_de[t] = de
                        lane_nf[t] = nf
                        monitor.end(t, epoch)
                        barrier.wait()
                        epoch += 1
            except threading.BrokenBarrierError:
                pass
            except BaseException as exc:  # surfaced after join
                errors.append(exc)
                barrier.abort()

        threads = [threading.Thread(target=lane, args=(t,), daemon=True) for t in range(T)]
        for th in threads:
            th.start()
        for th in threads:
            th.join()
        if errors:
            raise errors[0]
        self.energy_slot[self.g] = state["energy"]
        self.flip_slot[self.g] += state["flips"]
        return monitor


def _schedule_for(buffers: StagedBuffers, lanes: int) -> UpdateSchedule:
    K, N = buffers.layers, buffers.sites
    probe = LayeredSystem(K, N, np.ones((K, N), dtype=np.int32), buffers.coup_i, buffers.coup_j,
                          buffers.jeff[0], buffers.heff[0], float(buffers.jperp[0]))
    return color_sites(probe, lanes)


def execute(plan: ExecutionPlan, buffers: StagedBuffers, sweeps: int, rng: RngState,
            monitors: list | None = None) -> StagedBuffers:
    """Sweep every group ``sweeps`` times; group g draws from RNG chain g.

    Returns a new StagedBuffers; the input arena is left untouched.  When
    ``monitors`` is a list, lane-threaded runs append one PhaseMonitor per group.
    """
    if sweeps < 0:
        raise ValueError(f"sweeps must be >= 0, got {sweeps}")
    if plan.groups != buffers.groups:
        raise PlanMismatchError(f"plan has {plan.groups} groups, buffers hold {buffers.groups}")
    if not rng.initialized:
        raise RngCapacityError("RNG state used before mt_init")
    if rng.chains < plan.groups or rng.threads < plan.lanes_per_group:
        raise RngCapacityError(
            f"RNG has {rng.chains} chains x {rng.threads} threads, plan needs "
            f"{plan.groups} x {plan.lanes_per_group}")
    out = buffers.copy()
    out.byte_count_out = None
    if sweeps == 0:
        return out
    schedule = _schedule_for(out, plan.lanes_per_group)
    runs = [_GroupRun(out, schedule, g, rng, plan.lanes_per_group) for g in range(plan.groups)]
    if plan.backend_kind == "reference":
        for r in runs:
            r.run_serial(sweeps)
    elif plan.lane_threads:
        workers = plan.workers or plan.groups
        with ThreadPoolExecutor(max_workers=workers) as pool:
            got = list(pool.map(lambda r: r.run_lane_threads(sweeps), runs))
        if monitors is not None:
            monitors.extend(got)
    else:
        workers = plan.workers or min(plan.groups, os.cpu_count() or 1)
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(lambda r: r.run_serial(sweeps), runs))
    return out
