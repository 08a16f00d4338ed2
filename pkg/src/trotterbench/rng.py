"""Parallel MT19937 with a chain x word x thread state layout.

The state of all lanes lives in one flat ``uint32`` array.  Word ``w`` of
lane ``(chain, thread)`` sits at ``chain*threads*NN + w*threads + thread``,
so consecutive threads of one chain touch consecutive addresses for the
same word.  Each lane is an ordinary MT19937 stream seeded with
``init_genrand(seed + base)`` where ``base`` is the address of its word 0.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _accel
from ._accel import njit

NN = 624
MM = 397
MATRIX_A = 0x9908B0DF
UPPER_MASK = 0x80000000
LOWER_MASK = 0x7FFFFFFF
INIT_MULT = 1812433253
TWO_32 = 4294967296.0

_M32 = 0xFFFFFFFF


class RngError(RuntimeError):
    pass


@dataclass(eq=False)
class RngState:
    chains: int
    threads: int
    mt: np.ndarray
    mti: np.ndarray
    initialized: bool = False
    nn: int = NN

    def base(self, chain: int, thread: int) -> int:
        return chain * self.threads * self.nn + thread

    def lane(self, chain: int, thread: int) -> int:
        return chain * self.threads + thread

    def flat_index(self, chain: int, word: int, thread: int) -> int:
        return chain * self.threads * self.nn + word * self.threads + thread

    def copy(self) -> "RngState":
        return RngState(self.chains, self.threads, self.mt.copy(), self.mti.copy(),
                        self.initialized, self.nn)

    def check_lane(self, chain: int, thread: int) -> None:
        if not self.initialized:
            raise RngError("RNG state used before mt_init")
        if not (0 <= chain < self.chains and 0 <= thread < self.threads):
            raise IndexError(
                f"lane ({chain}, {thread}) outside {self.chains} chains x {self.threads} threads")


def mt_alloc(chains: int, threads: int) -> RngState:
    if chains < 1 or threads < 1:
        raise ValueError(f"chains and threads must be >= 1, got ({chains}, {threads})")
    try:
        mt = np.zeros(chains * NN * threads, dtype=np.uint32)
        mti = np.zeros(chains * threads, dtype=np.int32)
    except MemoryError as exc:
        raise MemoryError(
            f"cannot allocate MT state for {chains} chains x {threads} threads") from exc
    return RngState(chains, threads, mt, mti)


def mt_init(state: RngState, seed: int) -> RngState:
    """Seed every lane in place; returns ``state`` for chaining."""
    threads = state.threads
    lanes = np.arange(state.chains * threads, dtype=np.uint64)
    bases = (lanes // threads) * np.uint64(threads * NN) + lanes % threads
    # uint64 arithmetic, reduced mod 2**32 after each step
    prev = (np.uint64(seed & _M32) + bases) & np.uint64(_M32)
    view = state.mt.reshape(state.chains, NN, threads)
    view[:, 0, :] = prev.reshape(state.chains, threads).astype(np.uint32)
    mult = np.uint64(INIT_MULT)
    for w in range(1, NN):
        prev = (mult * (prev ^ (prev >> np.uint64(30))) + np.uint64(w)) & np.uint64(_M32)
        view[:, w, :] = prev.reshape(state.chains, threads).astype(np.uint32)
    state.mti[:] = NN
    state.initialized = True
    return state


# -- numba kernels: one lane, strided addressing ------------------------------

@njit
def lane_twist_jit(mt, base, stride):
    upper = np.uint32(UPPER_MASK)
    lower = np.uint32(LOWER_MASK)
    mag = np.uint32(MATRIX_A)
    one = np.uint32(1)
    for kk in range(NN):
        nxt = kk + 1
        if nxt == NN:
            nxt = 0
        far = kk + MM
        if far >= NN:
            far -= NN
        y = (mt[base + kk * stride] & upper) | (mt[base + nxt * stride] & lower)
        v = mt[base + far * stride] ^ (y >> one)
        if y & one:
            v ^= mag
        mt[base + kk * stride] = v


@njit
def temper_jit(y):
    y ^= y >> np.uint32(11)
    y ^= (y << np.uint32(7)) & np.uint32(0x9D2C5680)
    y ^= (y << np.uint32(15)) & np.uint32(0xEFC60000)
    y ^= y >> np.uint32(18)
    return y


@njit
def lane_fill_jit(mt, mti, chain, thread, threads, out):
    # the lane cursor lives in a local; hot loops must not call jit
    # functions with array arguments per draw
    lane = chain * threads + thread
    base = chain * threads * NN + thread
    i = mti[lane]
    for n in range(out.shape[0]):
        if i >= NN:
            lane_twist_jit(mt, base, threads)
            i = 0
        out[n] = temper_jit(mt[base + i * threads])
        i += 1
    mti[lane] = i


# -- numpy versions: vectorized over the words of one lane --------------------

def lane_twist_np(mt: np.ndarray, base: int, stride: int) -> None:
    w = mt[base: base + NN * stride: stride]
    # canonical in-place order, split where a later word reads an updated one
    for lo, hi in ((0, NN - MM), (NN - MM, 2 * (NN - MM)), (2 * (NN - MM), NN - 1)):
        y = (w[lo:hi] & UPPER_MASK) | (w[lo + 1:hi + 1] & LOWER_MASK)
        src = np.arange(lo, hi) + MM
        src[src >= NN] -= NN
        w[lo:hi] = w[src] ^ (y >> 1) ^ np.where(y & 1, np.uint32(MATRIX_A), np.uint32(0))
    y = (w[NN - 1] & UPPER_MASK) | (w[0] & LOWER_MASK)
    w[NN - 1] = w[MM - 1] ^ (y >> 1) ^ (MATRIX_A if y & 1 else 0)


def temper_np(y: np.ndarray) -> np.ndarray:
    y = y ^ (y >> 11)
    y = y ^ ((y << 7) & np.uint32(0x9D2C5680))
    y = y ^ ((y << 15) & np.uint32(0xEFC60000))
    return y ^ (y >> 18)


def lane_fill_np(mt, mti, chain, thread, threads, out) -> None:
    lane = chain * threads + thread
    base = chain * threads * NN + thread
    pos = 0
    n = out.shape[0]
    while pos < n:
        i = int(mti[lane])
        if i >= NN:
            lane_twist_np(mt, base, threads)
            i = 0
        take = min(n - pos, NN - i)
        out[pos:pos + take] = temper_np(mt[base + i * threads: base + (i + take) * threads: threads])
        mti[lane] = i + take
        pos += take


# -- public surface ------------------------------------------------------------

def mt_next_u32(state: RngState, chain: int, thread: int) -> int:
    state.check_lane(chain, thread)
    out = np.empty(1, dtype=np.uint32)
    if _accel.USE_JIT:
        lane_fill_jit(state.mt, state.mti, chain, thread, state.threads, out)
    else:
        lane_fill_np(state.mt, state.mti, chain, thread, state.threads, out)
    return int(out[0])


def u32_to_unit(raw):
    """Map raw 32-bit output(s) onto [0, 1) by dividing by 2**32."""
    return raw / TWO_32


def mt_next_unit(state: RngState, chain: int, thread: int) -> float:
    return u32_to_unit(mt_next_u32(state, chain, thread))


def mt_fill_u32(state: RngState, chain: int, thread: int, n: int) -> np.ndarray:
    """Next ``n`` raw outputs of one lane, same stream as ``n`` calls to mt_next_u32."""
    state.check_lane(chain, thread)
    out = np.empty(n, dtype=np.uint32)
    if _accel.USE_JIT:
        lane_fill_jit(state.mt, state.mti, chain, thread, state.threads, out)
    else:
        lane_fill_np(state.mt, state.mti, chain, thread, state.threads, out)
    return out
