"""Counter-based random streams.

Draw ``i`` of stream ``(seed, stream_id)`` is a pure function of the triple
``(seed, stream_id, i)``: the SplitMix64 finalizer applied to
``key + (i + 1) * GOLDEN``.  Nothing is carried between streams, so replicas
can be simulated in any order or on any thread and still reproduce exactly.
The compiled core in ``_simcore.pyx`` implements the same arithmetic; the two
must agree bit for bit.
"""

import numpy as np

MASK64 = 0xFFFFFFFFFFFFFFFF
GOLDEN = 0x9E3779B97F4A7C15
STREAM_MULT = 0xD1B54A32D192ED03
_TO_UNIT = 1.0 / 9007199254740992.0  # 2**-53


def mix64(z):
    z &= MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def stream_key(seed, stream_id):
    """64-bit key of one logical stream."""
    return mix64((mix64(seed & MASK64) + ((stream_id + 1) * STREAM_MULT)) & MASK64)


def derive_stream_id(parent, index, count):
    """Stream id of child ``index`` out of ``count`` under ``parent``."""
    return parent * count + index


class CounterStream:
    """Sequential view on one counter-based stream.

    >>> s = CounterStream(42, 7)
    >>> a = s.uniform(); b = s.uniform()
    >>> CounterStream(42, 7).uniform() == a
    True
    """

    __slots__ = ("key", "counter")

    def __init__(self, seed, stream_id, counter=0):
        self.key = stream_key(seed, stream_id)
        self.counter = counter

    def next_u64(self):
        self.counter += 1
        return mix64(self.key + self.counter * GOLDEN)

    def uniform(self):
        """Double in [0, 1) with 53 random bits."""
        return (self.next_u64() >> 11) * _TO_UNIT


def numpy_generator(seed, stream_id=0):
    """numpy Generator for vectorised sampling that is not part of the bitwise
    contract (Bernoulli fields, shuffles), keyed the same way as the streams."""
    return np.random.Generator(np.random.Philox(key=stream_key(seed, stream_id)))
