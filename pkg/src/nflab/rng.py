"""splitmix64 generator, bit-reproducible across platforms."""
from __future__ import annotations

import numpy as np

_MASK = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB


def _mix(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * np.uint64(_MIX1)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(_MIX2)
    return z ^ (z >> np.uint64(31))


class Prng:
    """splitmix64 stream.

    Examples
    --------
    >>> Prng(0).next_u64()
    16294208416658607535
    """

    def __init__(self, seed: int):
        self.state = int(seed) & _MASK

    def next_u64(self) -> int:
        return int(self.u64(1)[0])

    def u64(self, count: int) -> np.ndarray:
        """Next ``count`` outputs as a uint64 array."""
        k = np.arange(1, count + 1, dtype=np.uint64)
        with np.errstate(over="ignore"):
            states = np.uint64(self.state) + k * np.uint64(_GOLDEN)
            out = _mix(states)
        self.state = (self.state + count * _GOLDEN) & _MASK
        return out

    def uniform(self, shape, amplitude: float = 1.0) -> np.ndarray:
        """Uniform draws in ``[-amplitude, amplitude)`` using the top 53 bits."""
        count = int(np.prod(shape))
        u = (self.u64(count) >> np.uint64(11)).astype(float) * 2.0 ** -53
        return (amplitude * (2.0 * u - 1.0)).reshape(shape)
