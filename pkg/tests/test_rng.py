import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from trotterbench.rng import (NN, RngError, mt_alloc, mt_fill_u32, mt_init, mt_next_u32,
                              mt_next_unit, u32_to_unit)
from trotterbench.verify import nested_init, reference_stream


def test_first_output_of_default_seed(path):
    assert mt_next_u32(mt_init(mt_alloc(1, 1), 5489), 0, 0) == 3499211612


@pytest.mark.parametrize("seed", [0, 1, 42, 5489, 2**32 - 1])
def test_single_lane_matches_numpy_mt19937(path, seed):
    got = mt_fill_u32(mt_init(mt_alloc(1, 1), seed), 0, 0, 3 * NN + 5)
    np.testing.assert_array_equal(got, reference_stream(seed, 3 * NN + 5))


def test_strided_lane_is_its_own_stream(path):
    state = mt_init(mt_alloc(2, 32), 7)
    got = mt_fill_u32(state, 1, 5, 2000)
    np.testing.assert_array_equal(got, reference_stream(7 + state.base(1, 5), 2000))


def test_lanes_do_not_disturb_each_other(path):
    a = mt_init(mt_alloc(2, 4), 11)
    b = a.copy()
    mt_fill_u32(a, 0, 1, 1500)
    x = mt_fill_u32(a, 1, 2, 700)
    y = mt_fill_u32(b, 1, 2, 700)
    np.testing.assert_array_equal(x, y)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), cuts=st.lists(st.integers(0, 900), min_size=1, max_size=5))
def test_chunking_does_not_change_stream(seed, cuts):
    whole = mt_fill_u32(mt_init(mt_alloc(1, 1), seed), 0, 0, sum(cuts))
    state = mt_init(mt_alloc(1, 1), seed)
    parts = [mt_fill_u32(state, 0, 0, n) for n in cuts]
    np.testing.assert_array_equal(np.concatenate(parts), whole)


def test_jit_and_numpy_agree(monkeypatch):
    from trotterbench import _accel
    out = {}
    for flag in (True, False):
        monkeypatch.setattr(_accel, "USE_JIT", flag)
        state = mt_init(mt_alloc(3, 5), 99)
        out[flag] = [mt_fill_u32(state, c, t, 1300) for c in range(3) for t in (0, 4)]
    for a, b in zip(out[True], out[False]):
        np.testing.assert_array_equal(a, b)


@pytest.mark.parametrize("chains,threads", [(1, 1), (2, 2), (3, 32)])
def test_flat_layout_matches_nested_fill(chains, threads):
    flat = mt_init(mt_alloc(chains, threads), 123).mt
    np.testing.assert_array_equal(flat, nested_init(chains, threads, 123))


def test_flat_index_formula():
    state = mt_alloc(3, 4)
    assert state.flat_index(2, 5, 3) == 2 * 4 * NN + 5 * 4 + 3
    assert state.base(2, 3) == state.flat_index(2, 0, 3)


def test_unit_mapping_range():
    assert u32_to_unit(0) == 0.0
    assert u32_to_unit(2**32 - 1) < 1.0
    u = mt_next_unit(mt_init(mt_alloc(1, 1), 3), 0, 0)
    assert 0.0 <= u < 1.0


def test_uninitialized_state_is_rejected():
    with pytest.raises(RngError):
        mt_next_u32(mt_alloc(1, 1), 0, 0)


def test_lane_out_of_range():
    state = mt_init(mt_alloc(2, 2), 1)
    with pytest.raises(IndexError):
        mt_next_u32(state, 2, 0)
    with pytest.raises(IndexError):
        mt_next_u32(state, 0, 2)


@pytest.mark.parametrize("chains,threads", [(0, 1), (1, 0)])
def test_alloc_rejects_empty(chains, threads):
    with pytest.raises(ValueError):
        mt_alloc(chains, threads)
