"""Self-check suites run by ``trotterbench verify``.

Each suite returns ``(passed, detail)``.  Oracles here are independent of
the code paths they check: numpy's own MT19937 for the generator, a literal
3-D array fill for the state layout, exhaustive enumeration for energies.
"""

from __future__ import annotations

import math
from pathlib import Path
from typing import Callable

import numpy as np

from . import backend as be
from .harness import compare_rows, fixture_text, read_report
from .kernel import color_sites, flip_delta, sample_states
from .model import (LayeredSystem, PRESET_POINTS, build_schedule, generate_instance,
                    systems_for_schedule, total_energy, variable_count)
from .rng import INIT_MULT, NN, mt_alloc, mt_fill_u32, mt_init

REFERENCE_VARIABLES = {8: 27_648, 16: 69_632, 32: 151_552, 48: 350_208, 72: 654_336,
                       96: 1_363_968, 128: 2_113_536}

FIXTURE_FILES = ("gtx260_cuda.csv", "gtx260_opencl.csv")

# slowdown and transfer ranges the reference fixtures must reproduce
KERNEL_SLOWDOWN = (0.127, 0.626)
END_TO_END_SLOWDOWN = (0.157, 0.674)
TRANSFER_RATIO = (1.22, 1.56)
RANGE_TOL = 0.005
RATIO_TOL = 0.01

BOLTZMANN_SWEEPS = 1_000_000
BOLTZMANN_TV = 0.01


def suite_sizes() -> tuple[bool, str]:
    bad = [q for q, v in REFERENCE_VARIABLES.items()
           if variable_count(q, 128, PRESET_POINTS[q]) != v]
    return not bad, f"{len(REFERENCE_VARIABLES) - len(bad)}/7 size rows match"


def reference_stream(seed: int, n: int) -> np.ndarray:
    bg = np.random.MT19937()
    bg._legacy_seeding(seed)
    return bg.random_raw(n).astype(np.uint32)


def suite_rng(outputs: int = 10_000) -> tuple[bool, str]:
    for seed in (1, 42, 5489):
        got = mt_fill_u32(mt_init(mt_alloc(1, 1), seed), 0, 0, outputs)
        if not np.array_equal(got, reference_stream(seed, outputs)):
            first = int(np.argmax(got != reference_stream(seed, outputs)))
            return False, f"seed {seed}: first mismatch at output {first}"
    return True, f"{outputs} outputs match MT19937 for seeds 1, 42, 5489"


def nested_init(chains: int, threads: int, seed: int) -> np.ndarray:
    """State filled through [chain][word][thread] indexing, flattened C-order."""
    mt = np.zeros((chains, NN, threads), dtype=np.uint64)
    for c in range(chains):
        for t in range(threads):
            mt[c, 0, t] = (seed + c * threads * NN + t) & 0xFFFFFFFF
            for w in range(1, NN):
                prev = int(mt[c, w - 1, t])
                mt[c, w, t] = (INIT_MULT * (prev ^ (prev >> 30)) + w) & 0xFFFFFFFF
    return mt.astype(np.uint32).ravel()


def suite_layout(seed: int = 20_100_101) -> tuple[bool, str]:
    for chains in (1, 2, 3):
        for threads in (1, 2, 32):
            flat = mt_init(mt_alloc(chains, threads), seed).mt
            if not np.array_equal(flat, nested_init(chains, threads, seed)):
                return False, f"layout differs for ({chains}, {threads})"
    return True, "nested and flattened layouts agree for 9 shapes"


def random_system(g: np.random.Generator, sites: int, layers: int) -> LayeredSystem:
    ii, jj = np.triu_indices(sites, k=1)
    keep = g.random(ii.size) < 0.7
    return LayeredSystem(layers, sites, g.choice([-1, 1], size=(layers, sites)).astype(np.int32),
                         ii[keep].astype(np.int32), jj[keep].astype(np.int32),
                         g.normal(size=int(keep.sum())), g.normal(size=sites),
                         float(g.uniform(0.0, 2.0)))


def suite_delta(trials: int = 1000, seed: int = 7) -> tuple[bool, str]:
    g = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(trials):
        system = random_system(g, int(g.integers(1, 5)), int(g.integers(2, 5)))
        k = int(g.integers(system.layers))
        i = int(g.integers(system.sites))
        before = total_energy(system)
        delta = flip_delta(system, k, i)
        system.spins[k, i] *= -1
        worst = max(worst, abs(delta - (total_energy(system) - before)))
    return worst <= 1e-9, f"max |delta - brute force| = {worst:.3g} over {trials} flips"


def _backend_run(kind: str, seed: int, sweeps: int = 100) -> tuple[np.ndarray, np.ndarray]:
    instance = generate_instance(8, seed, 1.0)
    rng = mt_init(mt_alloc(4, 32), seed)
    systems = systems_for_schedule(instance, build_schedule(4, 3.0, 2.0), 16, rng)
    out = be.execute(be.plan(4, 32, kind), be.transfer_in(systems), sweeps, rng)
    return out.spins.copy(), out.total_flips.copy()


def suite_backend(seeds: int = 20) -> tuple[bool, str]:
    for seed in range(seeds):
        s_ref, f_ref = _backend_run("reference", seed)
        s_par, f_par = _backend_run("parallel", seed)
        if not (np.array_equal(s_ref, s_par) and np.array_equal(f_ref, f_par)):
            return False, f"backends diverge for seed {seed}"
    return True, f"reference and parallel identical over {seeds} seeds"


def boltzmann_system() -> LayeredSystem:
    return LayeredSystem(4, 2, np.ones((4, 2), dtype=np.int32), np.array([0], dtype=np.int32),
                         np.array([1], dtype=np.int32), np.array([0.4]), np.array([0.3, -0.2]), 0.5)


def exact_distribution(system: LayeredSystem) -> tuple[np.ndarray, np.ndarray]:
    """Boltzmann weights exp(-E)/Z over every state code (bit k*N+i set = spin +1)."""
    nvar = system.variable_count
    probe = system.copy()
    energies = np.empty(1 << nvar)
    for code in range(1 << nvar):
        bits = (code >> np.arange(nvar)) & 1
        probe.spins[...] = (2 * bits - 1).reshape(system.layers, system.sites)
        energies[code] = total_energy(probe)
    weights = np.exp(-(energies - energies.min()))
    return weights / weights.sum(), energies


def suite_boltzmann(sweeps: int = BOLTZMANN_SWEEPS, seed: int = 1) -> tuple[bool, str]:
    system = boltzmann_system()
    p, energies = exact_distribution(system)
    rng = mt_init(mt_alloc(1, 1), seed)
    hist, trace = sample_states(system, color_sites(system, 1), rng, 0, sweeps)
    tv = 0.5 * np.abs(hist / hist.sum() - p).sum()
    batches = trace[: sweeps - sweeps % 1000].reshape(1000, -1).mean(axis=1)
    stderr = batches.std(ddof=1) / math.sqrt(batches.size)
    exact_mean = float(p @ energies)
    z = (trace.mean() - exact_mean) / stderr
    ok = tv <= BOLTZMANN_TV and abs(z) <= 3.0
    return ok, f"TV = {tv:.4f}, mean energy off by {z:+.2f} standard errors"


def fixture_checks(cuda_text: str, opencl_text: str) -> tuple[bool, str]:
    rows = compare_rows(read_report(cuda_text), read_report(opencl_text))
    kernel = [c.relative_difference for c in rows if c.metric == "kernel"]
    e2e = [c.relative_difference for c in rows if c.metric == "end_to_end"]
    xfer = [c.ratio for c in rows if c.metric == "transfer"]
    checks = [
        abs(min(kernel) - KERNEL_SLOWDOWN[0]) <= RANGE_TOL,
        abs(max(kernel) - KERNEL_SLOWDOWN[1]) <= RANGE_TOL,
        abs(min(e2e) - END_TO_END_SLOWDOWN[0]) <= RANGE_TOL,
        abs(max(e2e) - END_TO_END_SLOWDOWN[1]) <= RANGE_TOL,
        min(xfer) >= TRANSFER_RATIO[0] - RATIO_TOL,
        max(xfer) <= TRANSFER_RATIO[1] + RATIO_TOL,
    ]
    detail = (f"kernel slowdown {min(kernel):.3f}..{max(kernel):.3f}, "
              f"end-to-end {min(e2e):.3f}..{max(e2e):.3f}, transfer ratio {min(xfer):.3f}..{max(xfer):.3f}")
    return all(checks), detail


def suite_fixtures(fixture_dir: str | None = None) -> tuple[bool, str]:
    try:
        if fixture_dir:
            texts = [Path(fixture_dir, f).read_text() for f in FIXTURE_FILES]
        else:
            texts = [fixture_text(f) for f in FIXTURE_FILES]
        return fixture_checks(*texts)
    except (OSError, ValueError, KeyError, ZeroDivisionError) as exc:
        return False, f"unreadable fixtures: {exc}"


SUITES: dict[str, Callable[..., tuple[bool, str]]] = {
    "sizes": suite_sizes,
    "rng": suite_rng,
    "layout": suite_layout,
    "delta": suite_delta,
    "backend": suite_backend,
    "boltzmann": suite_boltzmann,
    "fixtures": suite_fixtures,
}
