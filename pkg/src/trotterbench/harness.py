"""Phase-timed benchmark runs, repeat statistics and report rendering."""

from __future__ import annotations

import csv
import hashlib
import io
import statistics
import time
from contextlib import contextmanager
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterator, Sequence

from . import backend as be
from .kernel import warm_up
from .model import (DEFAULT_LAYERS, build_schedule, generate_instance, load_instance, preset_points,
                    systems_for_schedule, total_energy)
from .rng import mt_alloc, mt_init

PHASES = ("setup", "input", "copy_in", "kernel", "copy_out", "post")
METRICS = PHASES + ("transfer", "gpu_ops", "end_to_end")
COMPARE_METRICS = ("kernel", "transfer", "gpu_ops", "end_to_end")
REPORT_COLUMNS = ("qubits", "backend", "metric", "mean_s", "stdev_s", "bytes_in", "bytes_out")
EXTRA_COLUMNS = ("layers", "points", "sweeps", "reps", "seed", "flips", "spin_digest")

# drift allowed between incremental and recomputed energy after a long run
_ENERGY_RTOL = 1e-6


class PhaseError(RuntimeError):
    def __init__(self, phase: int, name: str, cause: BaseException):
        super().__init__(f"phase {phase} ({name}) failed: {cause}")
        self.phase = phase
        self.name = name


class AggregateError(ValueError):
    pass


class ReportKeyError(KeyError):
    pass


@dataclass
class BenchConfig:
    qubits: int
    layers: int = DEFAULT_LAYERS
    points: int | None = None
    sweeps: int = 20_000
    reps: int = 10
    backend: str = "reference"
    lanes_per_group: int = 32
    seed: int = 1
    instance_path: str | None = None
    density: float = 1.0
    gamma0: float = 3.0
    beta: float = 10.0
    lane_threads: bool = False
    out: str | None = None
    format: str = "csv"

    def __post_init__(self):
        if self.points is None:
            self.points = preset_points(self.qubits)
            if self.points is None:
                raise ValueError(f"no preset for {self.qubits} qubits; give points explicitly")
        for name in ("qubits", "layers", "points", "reps", "lanes_per_group"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.sweeps < 0:
            raise ValueError("sweeps must be >= 0")


@dataclass(frozen=True)
class PhaseRecord:
    """Durations of the six run phases in integer nanoseconds plus run descriptors."""

    t1_ns: int
    t2_ns: int
    t3_ns: int
    t4_ns: int
    t5_ns: int
    t6_ns: int
    bytes_in: int
    bytes_out: int
    qubits: int
    layers: int
    points: int
    sweeps: int
    backend_kind: str
    seed: int
    lanes: int = 1
    flips: int = 0
    spin_digest: str = ""
    energies: tuple[float, ...] = field(default=(), compare=False)

    t1_setup = property(lambda self: self.t1_ns / 1e9)
    t2_input = property(lambda self: self.t2_ns / 1e9)
    t3_copy_in = property(lambda self: self.t3_ns / 1e9)
    t4_kernel = property(lambda self: self.t4_ns / 1e9)
    t5_copy_out = property(lambda self: self.t5_ns / 1e9)
    t6_post = property(lambda self: self.t6_ns / 1e9)

    @property
    def gpu_ops_ns(self) -> int:
        return self.t3_ns + self.t4_ns + self.t5_ns

    @property
    def end_to_end_ns(self) -> int:
        return self.t1_ns + self.t2_ns + self.t3_ns + self.t4_ns + self.t5_ns + self.t6_ns

    @property
    def gpu_ops(self) -> float:
        return self.gpu_ops_ns / 1e9

    @property
    def end_to_end(self) -> float:
        return self.end_to_end_ns / 1e9

    def metric_ns(self, metric: str) -> int:
        if metric == "transfer":
            return self.t3_ns + self.t5_ns
        if metric == "gpu_ops":
            return self.gpu_ops_ns
        if metric == "end_to_end":
            return self.end_to_end_ns
        return getattr(self, f"t{PHASES.index(metric) + 1}_ns")

    def descriptor(self) -> tuple:
        return (self.qubits, self.layers, self.points, self.sweeps, self.backend_kind, self.seed,
                self.lanes, self.bytes_in, self.bytes_out, self.flips, self.spin_digest)


@dataclass(frozen=True)
class RunStats:
    qubits: int
    backend: str
    count: int
    mean: dict
    stdev: dict
    bytes_in: int
    bytes_out: int
    layers: int | None = None
    points: int | None = None
    sweeps: int | None = None
    seed: int | None = None
    flips: int | None = None
    spin_digest: str = ""


class _Stopwatch:
    def __init__(self):
        self.ns = [0] * len(PHASES)

    @contextmanager
    def phase(self, n: int) -> Iterator[None]:
        name = PHASES[n - 1]
        start = time.perf_counter_ns()
        try:
            yield
        except PhaseError:
            raise
        except Exception as exc:
            raise PhaseError(n, name, exc) from exc
        self.ns[n - 1] = time.perf_counter_ns() - start


def run_benchmark(config: BenchConfig, monitors: list | None = None) -> PhaseRecord:
    sw = _Stopwatch()
    with sw.phase(1):
        exec_plan = be.plan(config.points, config.lanes_per_group, config.backend,
                            config.lane_threads)
        rng = mt_init(mt_alloc(config.points, config.lanes_per_group), config.seed)
        warm_up()
    with sw.phase(2):
        if config.instance_path:
            instance = load_instance(Path(config.instance_path).read_text(), config.instance_path)
            if instance.qubit_count != config.qubits:
                raise ValueError(f"instance has {instance.qubit_count} qubits, "
                                 f"config says {config.qubits}")
        else:
            instance = generate_instance(config.qubits, config.seed, config.density)
        schedule = build_schedule(config.points, config.gamma0, config.beta)
        systems = systems_for_schedule(instance, schedule, config.layers, rng)
    with sw.phase(3):
        staged = be.transfer_in(systems)
    with sw.phase(4):
        staged = be.execute(exec_plan, staged, config.sweeps, rng, monitors)
    with sw.phase(5):
        results = be.transfer_out(staged)
    with sw.phase(6):
        energies = []
        digest = hashlib.sha256()
        for g, system in enumerate(results):
            e = total_energy(system)
            running = float(staged.energy[g])
            if abs(e - running) > _ENERGY_RTOL * (1.0 + abs(e)):
                raise ArithmeticError(f"group {g}: running energy {running} vs recomputed {e}")
            energies.append(e)
            digest.update(system.spins.tobytes())
        flips = int(staged.total_flips.sum())
    return PhaseRecord(*sw.ns, bytes_in=staged.byte_count_in, bytes_out=staged.byte_count_out,
                       qubits=config.qubits, layers=config.layers, points=config.points,
                       sweeps=config.sweeps, backend_kind=config.backend, seed=config.seed,
                       lanes=config.lanes_per_group, flips=flips,
                       spin_digest=digest.hexdigest()[:16], energies=tuple(energies))


# -- statistics ----------------------------------------------------------------------------

def mean_stdev(samples: Sequence[float]) -> tuple[float, float]:
    """Mean and sample (n - 1) standard deviation; stdev is 0 for one sample."""
    if not samples:
        raise AggregateError("no samples")
    m = statistics.fmean(samples)
    s = statistics.stdev(samples) if len(samples) > 1 else 0.0
    return m, s


def aggregate(records: Sequence[PhaseRecord]) -> RunStats:
    if not records:
        raise AggregateError("cannot aggregate zero records")
    first = records[0].descriptor()
    for r in records[1:]:
        if r.descriptor() != first:
            raise AggregateError(f"heterogeneous records: {r.descriptor()} != {first}")
    # sorting makes the float sums independent of record order
    mean, stdev = {}, {}
    for metric in METRICS:
        samples = sorted(r.metric_ns(metric) / 1e9 for r in records)
        mean[metric], stdev[metric] = mean_stdev(samples)
    r0 = records[0]
    return RunStats(r0.qubits, r0.backend_kind, len(records), mean, stdev, r0.bytes_in,
                    r0.bytes_out, r0.layers, r0.points, r0.sweeps, r0.seed, r0.flips,
                    r0.spin_digest)


def relative_difference(t_base: float, t_other: float) -> float:
    if not t_base > 0:
        raise ValueError(f"base time must be positive, got {t_base}")
    return (t_other - t_base) / t_base


def ratio(t_num: float, t_den: float) -> float:
    if t_den == 0:
        raise ZeroDivisionError("ratio denominator is zero")
    if t_den < 0:
        raise ValueError(f"denominator must be positive, got {t_den}")
    return t_num / t_den


def throughput(variables: int, sweeps: int, kernel_seconds: float) -> float:
    """Variable updates per second: variables * sweeps / kernel time."""
    if not kernel_seconds > 0:
        raise ValueError(f"kernel time must be positive, got {kernel_seconds}")
    return variables * sweeps / kernel_seconds


# -- reports ---------------------------------------------------------------------------------

@dataclass(frozen=True)
class ReportRow:
    qubits: int
    backend: str
    metric: str
    mean_s: float
    stdev_s: float
    bytes_in: int
    bytes_out: int
    extra: dict = field(default_factory=dict, compare=False)

    @property
    def key(self) -> tuple[int, str]:
        return self.qubits, self.metric


def _opt(v) -> str:
    return "" if v is None else str(v)


def report_rows(stats: Sequence[RunStats], metrics: Sequence[str] = METRICS) -> list[ReportRow]:
    rows = []
    for st in stats:
        extra = {"layers": st.layers, "points": st.points, "sweeps": st.sweeps, "reps": st.count,
                 "seed": st.seed, "flips": st.flips, "spin_digest": st.spin_digest}
        for m in metrics:
            rows.append(ReportRow(st.qubits, st.backend, m, st.mean[m], st.stdev[m],
                                  st.bytes_in, st.bytes_out, extra))
    return rows


def rows_to_csv(rows: Sequence[ReportRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(REPORT_COLUMNS + EXTRA_COLUMNS)
    for r in rows:
        w.writerow([r.qubits, r.backend, r.metric, repr(float(r.mean_s)), repr(float(r.stdev_s)),
                    r.bytes_in, r.bytes_out] + [_opt(r.extra.get(c)) for c in EXTRA_COLUMNS])
    return buf.getvalue()


def _md_table(header: Sequence[str], body: Sequence[Sequence[str]]) -> str:
    lines = ["| " + " | ".join(header) + " |", "|" + "|".join("---" for _ in header) + "|"]
    lines += ["| " + " | ".join(row) + " |" for row in body]
    return "\n".join(lines)


def rows_to_markdown(rows: Sequence[ReportRow]) -> str:
    by_key: dict[tuple[int, str], dict[str, ReportRow]] = {}
    for r in rows:
        by_key.setdefault((r.qubits, r.backend), {})[r.metric] = r
    keys = sorted(by_key)

    def cells(metrics):
        body = []
        for q, b in keys:
            row = [str(q), b]
            for m in metrics:
                r = by_key[(q, b)].get(m)
                row += [f"{r.mean_s:.3f}", f"{r.stdev_s:.3f}"] if r else ["", ""]
            body.append(row)
        return body

    parts = []
    for title, metrics in (("GPU operations and end-to-end time (s)", ("gpu_ops", "end_to_end")),
                           ("Kernel and data transfer time (s)", ("kernel", "transfer"))):
        header = ["qubits", "backend"]
        for m in metrics:
            header += [f"{m} avg", f"{m} stdev"]
        parts.append(f"### {title}\n\n" + _md_table(header, cells(metrics)))
    body = []
    for q, b in keys:
        any_row = next(iter(by_key[(q, b)].values()))
        body.append([str(q), b, f"{(any_row.bytes_in + any_row.bytes_out) / 1024:.2f}"])
    parts.append("### Data transferred (KB)\n\n" + _md_table(["qubits", "backend", "KB"], body))
    return "\n\n".join(parts) + "\n"


def emit_report(stats: Sequence[RunStats], format: str = "csv",
                metrics: Sequence[str] = METRICS) -> str:
    if not stats:
        raise AggregateError("nothing to report")
    rows = report_rows(stats, metrics)
    if format == "csv":
        return rows_to_csv(rows)
    if format == "markdown":
        return rows_to_markdown(rows)
    raise ValueError(f"unknown report format {format!r}")


def read_report(text: str) -> list[ReportRow]:
    """Parse report CSV; lines starting with '#' are comments."""
    lines = [ln for ln in text.splitlines() if ln.strip() and not ln.lstrip().startswith("#")]
    reader = csv.DictReader(lines)
    missing = [c for c in REPORT_COLUMNS if c not in (reader.fieldnames or ())]
    if missing:
        raise ValueError(f"report lacks columns {missing}")
    rows = []
    for n, rec in enumerate(reader, start=2):
        try:
            rows.append(ReportRow(int(rec["qubits"]), rec["backend"], rec["metric"],
                                  float(rec["mean_s"]), float(rec["stdev_s"]),
                                  int(rec["bytes_in"]), int(rec["bytes_out"]),
                                  {c: rec[c] for c in EXTRA_COLUMNS if rec.get(c)}))
        except (TypeError, ValueError) as exc:
            raise ValueError(f"report row {n}: {exc}") from None
    return rows


@dataclass(frozen=True)
class Comparison:
    qubits: int
    metric: str
    base_backend: str
    other_backend: str
    base_s: float
    other_s: float
    ratio: float
    relative_difference: float


def compare_rows(base: Sequence[ReportRow], other: Sequence[ReportRow],
                 metrics: Sequence[str] = COMPARE_METRICS) -> list[Comparison]:
    a = {r.key: r for r in base if r.metric in metrics}
    b = {r.key: r for r in other if r.metric in metrics}
    if a.keys() != b.keys():
        only_a = sorted(a.keys() - b.keys())
        only_b = sorted(b.keys() - a.keys())
        raise ReportKeyError(f"row keys differ; only in first: {only_a}; only in second: {only_b}")
    if not a:
        raise ReportKeyError("no comparable rows")
    out = []
    for key in sorted(a, key=lambda k: (k[0], metrics.index(k[1]))):
        ra, rb = a[key], b[key]
        out.append(Comparison(key[0], key[1], ra.backend, rb.backend, ra.mean_s, rb.mean_s,
                              ratio(rb.mean_s, ra.mean_s),
                              relative_difference(ra.mean_s, rb.mean_s)))
    return out


def comparisons_to_csv(rows: Sequence[Comparison]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["qubits", "metric", "base_backend", "other_backend", "base_s", "other_s", "ratio",
                "relative_difference"])
    for c in rows:
        w.writerow([c.qubits, c.metric, c.base_backend, c.other_backend, repr(c.base_s),
                    repr(c.other_s), repr(c.ratio), repr(c.relative_difference)])
    return buf.getvalue()


def fixture_text(name: str) -> str:
    return resources.files("trotterbench").joinpath("fixtures", name).read_text()


def variables_per_second(stats: RunStats) -> float:
    return throughput(stats.qubits * stats.layers * stats.points, stats.sweeps, stats.mean["kernel"])
