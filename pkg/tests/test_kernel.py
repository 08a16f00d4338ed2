import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from trotterbench.kernel import (NeighborTable, ScheduleMismatchError, accept, color_sites,
                                 flip_delta, greedy_colors, layer_classes, run_point,
                                 sample_states, sweep)
from trotterbench.model import LayeredSystem, total_energy
from trotterbench.rng import mt_alloc, mt_init
from trotterbench.verify import boltzmann_system, exact_distribution

from conftest import make_system


def chain_system(spins):
    spins = np.asarray(spins, dtype=np.int32)
    K, N = spins.shape
    return LayeredSystem(K, N, spins, np.zeros(0, np.int32), np.zeros(0, np.int32),
                         np.zeros(0), np.zeros(N), 1.0)


def test_two_layer_flip_delta():
    # both ring bonds join the same pair: E goes from -2 to +2
    assert flip_delta(chain_system([[1], [1]]), 0, 0) == 4.0


@settings(max_examples=200, deadline=None)
@given(seed=st.integers(0, 10**6), sites=st.integers(1, 5), layers=st.integers(2, 5),
       data=st.data())
def test_flip_delta_equals_energy_difference(seed, sites, layers, data):
    system = make_system(np.random.default_rng(seed), sites, layers)
    k = data.draw(st.integers(0, layers - 1))
    i = data.draw(st.integers(0, sites - 1))
    before = total_energy(system)
    delta = flip_delta(system, k, i)
    system.spins[k, i] *= -1
    assert delta == pytest.approx(total_energy(system) - before, abs=1e-9)


def test_accept_rule():
    assert accept(-1.0, 1.0, 0.999)
    assert accept(0.0, 1.0, 0.999)
    assert accept(1.0, 1.0, math.exp(-1.0) - 1e-12)
    assert not accept(1.0, 1.0, math.exp(-1.0))
    with pytest.raises(ValueError):
        accept(1.0, 1.0, 1.0)


def test_neighbor_table_sorted_and_symmetric():
    nt = NeighborTable.build(4, [2, 0, 0], [3, 3, 1], [1.0, 2.0, 3.0])
    assert nt.idx[nt.ptr[0]:nt.ptr[1]].tolist() == [1, 3]
    assert nt.idx[nt.ptr[3]:nt.ptr[4]].tolist() == [0, 2]
    assert nt.w[nt.ptr[3]:nt.ptr[4]].tolist() == [2.0, 1.0]


def test_greedy_colors_are_proper():
    g = np.random.default_rng(3)
    system = make_system(g, 12, 2, density=0.4)
    colors = greedy_colors(12, system.coup_i, system.coup_j)
    assert np.all(colors[system.coup_i] != colors[system.coup_j])


@pytest.mark.parametrize("layers,expected", [(2, [0, 1]), (4, [0, 1, 0, 1]), (5, [0, 1, 0, 1, 2])])
def test_layer_classes(layers, expected):
    assert layer_classes(layers).tolist() == expected


@pytest.mark.parametrize("layers,lanes", [(4, 1), (5, 3), (6, 32)])
def test_schedule_is_conflict_free_and_complete(layers, lanes):
    system = make_system(np.random.default_rng(layers), 9, layers, density=0.5)
    sched = color_sites(system, lanes)
    seen = set()
    nt = NeighborTable.of(system)
    for phase in sched.phases:
        assert not phase & seen
        seen |= phase
        for (k, i) in phase:
            for r in range(nt.ptr[i], nt.ptr[i + 1]):
                assert (k, int(nt.idx[r])) not in phase
            for kk in system.layer_neighbors(k):
                assert kk == k or (kk, i) not in phase
    assert len(seen) == system.variable_count
    for p in range(sched.n_phases):
        for t in range(lanes):
            assert all(sched.thread_of(k, i) == t for k, i in sched.segment(p, t))


def test_incremental_energy_tracks_recomputed(path):
    system = make_system(np.random.default_rng(5), 7, 6)
    sched = color_sites(system, 4)
    res = run_point(system, 200, sched, mt_init(mt_alloc(1, 4), 2), 0)
    assert res.energy == pytest.approx(total_energy(system), abs=1e-9)
    assert res.flip_counts.sum() == res.flips


def test_sweep_stats(path):
    system = make_system(np.random.default_rng(9), 4, 4)
    stats = sweep(system, color_sites(system), mt_init(mt_alloc(1, 1), 1), 0)
    assert stats.examined == 16
    assert 0 <= stats.flipped <= 16


def test_zero_sweeps_is_identity(path):
    system = make_system(np.random.default_rng(1), 4, 4)
    before = system.spins.copy()
    res = run_point(system, 0, color_sites(system), mt_init(mt_alloc(1, 1), 1), 0)
    np.testing.assert_array_equal(system.spins, before)
    assert res.flips == 0


def test_lane_count_changes_nothing_but_stream_assignment(path):
    base = make_system(np.random.default_rng(4), 6, 4)
    a, b = base.copy(), base.copy()
    run_point(a, 30, color_sites(a, 2), mt_init(mt_alloc(1, 2), 6), 0)
    run_point(b, 30, color_sites(b, 2), mt_init(mt_alloc(1, 2), 6), 0)
    np.testing.assert_array_equal(a.spins, b.spins)


def test_schedule_mismatch():
    a = make_system(np.random.default_rng(1), 3, 4)
    b = make_system(np.random.default_rng(1), 4, 4)
    with pytest.raises(ScheduleMismatchError):
        run_point(b, 1, color_sites(a), mt_init(mt_alloc(1, 1), 1), 0)


def test_rng_must_cover_lanes():
    system = make_system(np.random.default_rng(1), 4, 4)
    with pytest.raises(ValueError):
        run_point(system, 1, color_sites(system, 4), mt_init(mt_alloc(1, 2), 1), 0)
    with pytest.raises(ValueError):
        run_point(system, 1, color_sites(system), mt_alloc(1, 1), 0)


def test_zero_temperature_descends():
    # huge couplings: no uphill move is ever accepted
    system = make_system(np.random.default_rng(2), 5, 4, jperp=50.0)
    system.jeff[:] *= 100
    system.heff[:] *= 100
    sched = color_sites(system)
    rng = mt_init(mt_alloc(1, 1), 3)
    e = total_energy(system)
    for _ in range(20):
        e_next = sweep(system, sched, rng, 0).energy
        assert e_next <= e + 1e-9
        e = e_next


def test_short_run_samples_boltzmann():
    system = boltzmann_system()
    p, _ = exact_distribution(system)
    hist, trace = sample_states(system, color_sites(system), mt_init(mt_alloc(1, 1), 4), 0, 200_000)
    assert hist.sum() == trace.size == 200_000
    assert 0.5 * np.abs(hist / hist.sum() - p).sum() < 0.03


def test_histogram_size_limit():
    system = make_system(np.random.default_rng(1), 5, 5)
    with pytest.raises(ValueError):
        sample_states(system, color_sites(system), mt_init(mt_alloc(1, 1), 1), 0, 10)
