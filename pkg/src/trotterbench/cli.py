"""Command line: ``trotterbench {bench,verify,gen-instance,compare}``.

Exit status: 0 success, 1 runtime failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import os
import sys
import tempfile
from pathlib import Path

from . import verify
from .backend import BACKENDS
from .harness import (BenchConfig, PhaseError, aggregate, compare_rows, comparisons_to_csv,
                      emit_report, read_report, run_benchmark, _md_table)
from .model import DEFAULT_LAYERS, emit_instance, generate_instance, preset_points

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


def write_atomic(path: str | os.PathLike, text: str) -> None:
    """Write via a temp file in the target directory, then rename over ``path``."""
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{target.name}.", dir=target.parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, target)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _emit(text: str, out: str | None) -> None:
    if out:
        write_atomic(out, text)
    else:
        sys.stdout.write(text)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="trotterbench", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    b = sub.add_parser("bench", help="run the phase-timed benchmark")
    b.add_argument("--qubits", type=int, required=True)
    b.add_argument("--layers", type=int, default=DEFAULT_LAYERS)
    b.add_argument("--points", type=int, help="simulation points (default: preset for --qubits)")
    b.add_argument("--sweeps", type=int, default=20_000)
    b.add_argument("--reps", type=int, default=10)
    b.add_argument("--backend", choices=BACKENDS, default="reference")
    b.add_argument("--lanes", type=int, default=32, dest="lanes_per_group",
                   help="lanes per work group")
    b.add_argument("--lane-threads", action="store_true",
                   help="parallel backend: one thread per lane with phase barriers")
    b.add_argument("--seed", type=int, default=1)
    b.add_argument("--instance", dest="instance_path", help="instance file (default: generated)")
    b.add_argument("--density", type=float, default=1.0, help="coupling density of generated instance")
    b.add_argument("--gamma0", type=float, default=3.0)
    b.add_argument("--beta", type=float, default=10.0)
    b.add_argument("--out")
    b.add_argument("--format", choices=("csv", "markdown"), default="csv")

    v = sub.add_parser("verify", help="run the self-check suites")
    v.add_argument("--suite", action="append", choices=sorted(verify.SUITES),
                   help="run only this suite (repeatable)")
    v.add_argument("--fixture-dir", help="directory holding the timing fixture CSVs")

    g = sub.add_parser("gen-instance", help="write a random +-1 instance")
    g.add_argument("--qubits", type=int, required=True)
    g.add_argument("--seed", type=int, default=1)
    g.add_argument("--density", type=float, default=1.0)
    g.add_argument("--out")

    c = sub.add_parser("compare", help="ratio and relative difference of two reports")
    c.add_argument("file_a", help="baseline report")
    c.add_argument("file_b", help="report compared against the baseline")
    c.add_argument("--out")
    c.add_argument("--format", choices=("csv", "markdown"), default="csv")
    return parser


def parse_args(argv=None):
    """Return ``(command, payload)``; payload is a BenchConfig for ``bench``."""
    parser = build_parser()
    ns = parser.parse_args(argv)
    if ns.command != "bench":
        return ns.command, ns
    if ns.points is None and preset_points(ns.qubits) is None:
        parser.error(f"no preset for {ns.qubits} qubits; pass --points")
    fields = {k: v for k, v in vars(ns).items() if k != "command"}
    try:
        return "bench", BenchConfig(**fields)
    except ValueError as exc:
        parser.error(str(exc))


def cmd_bench(config: BenchConfig) -> int:
    records = []
    try:
        for rep in range(config.reps):
            rec = run_benchmark(config)
            records.append(rec)
            print(f"rep {rep + 1}/{config.reps}: kernel {rec.t4_kernel:.3f} s, "
                  f"end-to-end {rec.end_to_end:.3f} s", file=sys.stderr)
        report = emit_report([aggregate(records)], config.format)
    except (PhaseError, ValueError, OSError) as exc:
        print(f"bench failed: {exc}", file=sys.stderr)
        return EXIT_FAIL
    _emit(report, config.out)
    return EXIT_OK


def cmd_verify(suites=None, fixture_dir: str | None = None) -> int:
    names = suites or list(verify.SUITES)
    failed = 0
    for name in names:
        fn = verify.SUITES[name]
        try:
            ok, detail = fn(fixture_dir) if name == "fixtures" else fn()
        except Exception as exc:  # a crashing suite is a failing suite
            ok, detail = False, f"error: {exc}"
        failed += not ok
        print(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")
    return EXIT_OK if not failed else EXIT_FAIL


def cmd_gen_instance(ns) -> int:
    try:
        text = emit_instance(generate_instance(ns.qubits, ns.seed, ns.density))
    except ValueError as exc:
        print(f"gen-instance failed: {exc}", file=sys.stderr)
        return EXIT_USAGE
    _emit(text, ns.out)
    return EXIT_OK


def cmd_compare(file_a: str, file_b: str, out: str | None = None, format: str = "csv") -> int:
    try:
        rows = compare_rows(read_report(Path(file_a).read_text()),
                            read_report(Path(file_b).read_text()))
    except (OSError, ValueError, KeyError, ZeroDivisionError) as exc:
        print(f"compare failed: {exc}", file=sys.stderr)
        return EXIT_FAIL
    if format == "csv":
        text = comparisons_to_csv(rows)
    else:
        body = [[str(c.qubits), c.metric, f"{c.base_s:.3f}", f"{c.other_s:.3f}", f"{c.ratio:.3f}",
                 f"{100 * c.relative_difference:.1f}%"] for c in rows]
        text = _md_table(["qubits", "metric", rows[0].base_backend, rows[0].other_backend,
                          "ratio", "relative difference"], body) + "\n"
    _emit(text, out)
    return EXIT_OK


def main(argv=None) -> int:
    try:
        command, payload = parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if isinstance(exc.code, int) else EXIT_USAGE
    if command == "bench":
        return cmd_bench(payload)
    if command == "verify":
        return cmd_verify(payload.suite, payload.fixture_dir)
    if command == "gen-instance":
        return cmd_gen_instance(payload)
    return cmd_compare(payload.file_a, payload.file_b, payload.out, payload.format)


if __name__ == "__main__":
    sys.exit(main())
