"""Acceptance criteria 1-9, each under its runtime limit.

Each test carries a ``criterion`` marker; conftest prints one PASS/FAIL line
per criterion at the end of the run.
"""

import time

import pytest

from trotterbench import backend as be
from trotterbench import cli, verify
from trotterbench.harness import BenchConfig, read_report, run_benchmark
from trotterbench.kernel import warm_up


@pytest.fixture(scope="module", autouse=True)
def compiled():
    # loading compiled kernels is a one-off cost, not part of any check
    warm_up()


def check(record_property, limit_s, body):
    start = time.perf_counter()
    ok, detail = body()
    elapsed = time.perf_counter() - start
    record_property("detail", f"{detail}; {elapsed:.2f} s (limit {limit_s:g} s)")
    assert ok, detail
    assert elapsed < limit_s, f"took {elapsed:.2f} s, limit {limit_s} s"


@pytest.mark.criterion(1, "size arithmetic")
def test_c1_sizes(record_property):
    check(record_property, 1, verify.suite_sizes)


@pytest.mark.criterion(2, "RNG conformance")
def test_c2_rng(record_property):
    check(record_property, 1, verify.suite_rng)


@pytest.mark.criterion(3, "layout equivalence")
def test_c3_layout(record_property):
    check(record_property, 5, verify.suite_layout)


@pytest.mark.criterion(4, "backend equivalence")
def test_c4_backend(record_property):
    check(record_property, 30, verify.suite_backend)


@pytest.mark.criterion(5, "Boltzmann oracle")
def test_c5_boltzmann(record_property):
    check(record_property, 60, verify.suite_boltzmann)


@pytest.mark.criterion(6, "delta oracle")
def test_c6_delta(record_property):
    check(record_property, 10, verify.suite_delta)


@pytest.mark.criterion(7, "fixture statistics")
def test_c7_fixtures(record_property):
    check(record_property, 1, verify.suite_fixtures)


LIVE = dict(qubits=8, layers=32, points=4, sweeps=500, reps=1, seed=11, lanes_per_group=32)


@pytest.mark.criterion(8, "accounting identities")
def test_c8_accounting(record_property):
    def body():
        records = [run_benchmark(BenchConfig(**LIVE, backend=kind)) for kind in be.BACKENDS]
        monitors = []
        # one thread per lane is slow under the GIL; fewer sweeps still cross many barriers
        threaded = dict(LIVE, sweeps=50)
        records.append(run_benchmark(BenchConfig(**threaded, backend="parallel", lane_threads=True),
                                     monitors))
        ok = all(r.gpu_ops_ns == r.t3_ns + r.t4_ns + r.t5_ns
                 and r.end_to_end_ns >= r.gpu_ops_ns >= r.t4_ns
                 and r.bytes_in == r.bytes_out > 0 for r in records)
        ok = ok and bool(monitors) and all(not m.violations for m in monitors)
        return ok, f"{len(records)} live records, {len(monitors)} barrier monitors without violations"

    check(record_property, 60, body)


NON_TIMING = ("qubits", "backend", "metric", "bytes_in", "bytes_out")


@pytest.mark.criterion(9, "determinism")
def test_c9_determinism(record_property, tmp_path):
    argv = ["bench", "--qubits", "8", "--layers", "32", "--points", "4", "--sweeps", "500",
            "--reps", "2", "--seed", "11"]

    def body():
        reports = []
        for n in range(2):
            out = tmp_path / f"run{n}.csv"
            if cli.main(argv + ["--out", str(out)]) != 0:
                return False, f"bench run {n} failed"
            reports.append([(tuple(getattr(r, c) for c in NON_TIMING), r.extra)
                            for r in read_report(out.read_text())])
        digest = reports[0][0][1]["spin_digest"]
        return reports[0] == reports[1], f"identical non-timing columns, spin digest {digest}"

    check(record_property, 60, body)
