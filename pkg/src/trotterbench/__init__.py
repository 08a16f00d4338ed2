"""Simulated quantum annealing of Ising problems with a phase-timed benchmark harness."""

from .backend import ExecutionPlan, execute, plan, transfer_in, transfer_out
from .harness import BenchConfig, PhaseRecord, aggregate, emit_report, run_benchmark
from .kernel import color_sites, flip_delta, run_point, sweep
from .model import (AnnealSchedule, LayeredSystem, ProblemInstance, SimulationPoint,
                    build_schedule, generate_instance, load_instance, ring_coupling,
                    total_energy, trotterize, variable_count)
from .rng import RngState, mt_alloc, mt_fill_u32, mt_init, mt_next_u32, mt_next_unit

__version__ = "0.1.0"

__all__ = [
    "AnnealSchedule", "BenchConfig", "ExecutionPlan", "LayeredSystem", "PhaseRecord",
    "ProblemInstance", "RngState", "SimulationPoint", "aggregate", "build_schedule",
    "color_sites", "emit_report", "execute", "flip_delta", "generate_instance", "load_instance",
    "mt_alloc", "mt_fill_u32", "mt_init", "mt_next_u32", "mt_next_unit", "plan", "ring_coupling",
    "run_benchmark", "run_point", "sweep", "total_energy", "transfer_in", "transfer_out",
    "trotterize", "variable_count",
]
