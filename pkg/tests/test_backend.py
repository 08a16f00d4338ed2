import numpy as np
import pytest

from trotterbench import backend as be
from trotterbench.model import build_schedule, generate_instance, systems_for_schedule, total_energy
from trotterbench.rng import mt_alloc, mt_init


def staged(points=4, layers=8, qubits=8, seed=3, lanes=8):
    rng = mt_init(mt_alloc(points, lanes), seed)
    systems = systems_for_schedule(generate_instance(qubits, seed), build_schedule(points, 3.0, 2.0),
                                   layers, rng)
    return systems, be.transfer_in(systems), rng


def test_round_trip_preserves_systems():
    systems, buf, _ = staged()
    back = be.transfer_out(buf)
    assert buf.byte_count_out == buf.byte_count_in == buf.arena.size
    for a, b in zip(systems, back):
        np.testing.assert_array_equal(a.spins, b.spins)
        np.testing.assert_array_equal(a.jeff, b.jeff)
        np.testing.assert_array_equal(a.heff, b.heff)
        assert a.jperp == b.jperp
        assert a.point.s == b.point.s


def test_arena_views_and_alignment():
    _, buf, _ = staged(points=3, layers=5, qubits=7)
    assert (buf.groups, buf.layers, buf.sites) == (3, 5, 7)
    assert buf.spins.shape == (3, 5, 7)
    assert buf.flip_counts.dtype == np.int64
    for view in buf.views.values():
        offset = view.__array_interface__["data"][0] - buf.arena.__array_interface__["data"][0]
        assert offset % 8 == 0


def test_preset_transfer_size_is_in_range():
    _, buf, _ = staged(points=27, layers=128, qubits=8)
    # roughly a third of a megabyte each way for the smallest preset
    assert 250_000 < buf.byte_count_in < 700_000


def test_malformed_arena():
    _, buf, _ = staged()
    bad = buf.arena.copy()
    bad[0] ^= 0xFF
    with pytest.raises(be.MalformedBufferError):
        be.StagedBuffers(bad, bad.size)
    with pytest.raises(be.MalformedBufferError):
        be.StagedBuffers(buf.arena[:-8].copy(), buf.arena.size - 8)
    spins_bad = buf.arena.copy()
    sb = be.StagedBuffers(spins_bad, spins_bad.size)
    sb.spins[0, 0, 0] = 3
    with pytest.raises(be.MalformedBufferError):
        be.transfer_out(sb)


def test_mixed_topologies_rejected():
    a, _, _ = staged(qubits=6)
    b, _, _ = staged(qubits=7)
    with pytest.raises(ValueError):
        be.pack_systems([a[0], b[0]])


@pytest.mark.parametrize("kind,lane_threads", [("parallel", False), ("parallel", True)])
def test_backends_match_reference(kind, lane_threads):
    _, buf, rng = staged()
    ref = be.execute(be.plan(4, 8), buf, 40, rng.copy())
    monitors = []
    got = be.execute(be.plan(4, 8, kind, lane_threads), buf, 40, rng.copy(), monitors)
    np.testing.assert_array_equal(ref.arena, got.arena)
    if lane_threads:
        assert len(monitors) == 4
        assert all(m.violations == [] and m.started > 0 for m in monitors)


def test_execute_leaves_input_untouched_and_tracks_energy():
    _, buf, rng = staged()
    before = buf.arena.copy()
    out = be.execute(be.plan(4, 8), buf, 25, rng)
    np.testing.assert_array_equal(buf.arena, before)
    for g, system in enumerate(be.transfer_out(out)):
        assert out.energy[g] == pytest.approx(total_energy(system), abs=1e-9)
    assert out.total_flips.sum() == out.flip_counts.sum()


def test_zero_sweeps_copies():
    _, buf, rng = staged()
    out = be.execute(be.plan(4, 8), buf, 0, rng)
    np.testing.assert_array_equal(out.arena, buf.arena)


def test_capacity_and_plan_checks():
    _, buf, rng = staged()
    with pytest.raises(be.PlanMismatchError):
        be.execute(be.plan(3, 8), buf, 1, rng)
    with pytest.raises(be.RngCapacityError):
        be.execute(be.plan(4, 16), buf, 1, rng)
    with pytest.raises(be.RngCapacityError):
        be.execute(be.plan(4, 8), buf, 1, mt_alloc(4, 8))


def test_plan_validation():
    with pytest.raises(ValueError):
        be.plan(0)
    with pytest.raises(ValueError):
        be.plan(2, kind="cuda")
    with pytest.raises(ValueError):
        be.plan(2, lane_threads=True)


def test_phase_monitor_flags_early_start():
    m = be.PhaseMonitor(2)
    m.begin(0, 0)
    m.end(0, 0)
    m.begin(0, 1)
    assert m.violations == [(0, 1)]
