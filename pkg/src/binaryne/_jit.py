"""Small numba primitives shared by the walk, sampling, training and search kernels.

Random streams are SplitMix64: a 64-bit counter pushed through a fixed mixer.
A stream is keyed by integers (seed, a, b) so independent work items (one walk,
one Hogwild worker) get reproducible, non-overlapping sequences without any
shared state.
"""
import numpy as np
from numba import njit, types
from numba.extending import intrinsic

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_INV53 = 1.0 / 9007199254740992.0


@njit(inline="always", cache=True)
def mix64(z):
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


@njit(cache=True)
def new_stream(seed, a, b):
    """State array for the stream keyed by (seed, a, b)."""
    state = np.empty(1, dtype=np.uint64)
    h = mix64(np.uint64(seed) + _GOLDEN)
    h = mix64(h ^ (np.uint64(a) + _GOLDEN))
    h = mix64(h ^ (np.uint64(b) + _GOLDEN))
    state[0] = h
    return state


@njit(inline="always", cache=True)
def next_u64(state):
    state[0] += _GOLDEN
    return mix64(state[0])


@njit(inline="always", cache=True)
def uniform(state):
    """Double in [0, 1) with 53 random bits."""
    return np.float64(next_u64(state) >> _S11) * _INV53


@njit(inline="always", cache=True)
def below(state, n):
    k = np.int64(uniform(state) * n)
    return k if k < n else n - 1


@njit(inline="always", cache=True)
def alias_draw(prob, alias, state):
    k = below(state, prob.size)
    if uniform(state) < prob[k]:
        return k
    return alias[k]


@intrinsic
def _ctpop(typingctx, x):
    if not isinstance(x, types.Integer):
        return None
    sig = x(x)

    def codegen(context, builder, signature, args):
        return builder.ctpop(args[0])

    return sig, codegen


@njit(inline="always", cache=True)
def popcount64(x):
    return _ctpop(x)
