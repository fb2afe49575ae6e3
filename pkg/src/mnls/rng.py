"""Seeded, platform-independent random streams.

The generator is Philox4x64-10 (a counter-based generator, as shipped in
``numpy.random.Philox``) keyed by a 128-bit key.  The low 64 bits hold
``seed ^ sample_index`` and the high 64 bits hold a stream number, so every
(seed, sample, stream) triple addresses an independent stream and parallel
and serial runs draw identical numbers per sample.

Only ``random_raw`` output is consumed; the conversion to floats is done here
so it does not depend on numpy's distribution code:

* uniform: ``(x >> 11) * 2**-53`` in [0, 1)
* complex Gaussian (E|z|^2 = 1): Box-Muller on consecutive pairs
  ``(u1, u2)`` with ``r = sqrt(-log(1 - u1))`` and ``z = r exp(2 pi i u2)``
"""
from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1
_SCALE = 2.0**-53


class SeededRng:
    """Deterministic stream for one (seed, sample, stream) triple."""

    def __init__(self, seed: int, sample: int = 0, stream: int = 0):
        seed, sample, stream = int(seed), int(sample), int(stream)
        if not (0 <= seed <= MASK64 and 0 <= sample <= MASK64 and 0 <= stream <= MASK64):
            raise ValueError("seed, sample and stream must be unsigned 64-bit integers")
        self.seed, self.sample, self.stream = seed, sample, stream
        key = ((seed ^ sample) & MASK64) | (stream << 64)
        self._bits = np.random.Philox(key=key)

    def raw(self, n: int) -> np.ndarray:
        return self._bits.random_raw(int(n))

    def uniform(self, n: int) -> np.ndarray:
        return (self.raw(n) >> np.uint64(11)).astype(np.float64) * _SCALE

    def complex_normal(self, n: int) -> np.ndarray:
        u = self.uniform(2 * n)
        u1, u2 = u[0::2], u[1::2]
        r = np.sqrt(-np.log1p(-u1))
        return r * np.exp(2j * np.pi * u2)

    def phases(self, n: int) -> np.ndarray:
        return np.exp(2j * np.pi * self.uniform(n))


def seeded_rng(seed: int, sample: int = 0, stream: int = 0) -> SeededRng:
    return SeededRng(seed, sample, stream)
