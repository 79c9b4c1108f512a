"""Seeded random streams.

All randomness goes through :class:`RngStream`, a thin buffered wrapper over
numpy's PCG64 bit generator.  PCG64 output is specified bit-for-bit, so a seed
reproduces the same draw sequence on every platform numpy supports.
"""
from __future__ import annotations

import numpy as np

_BLOCK = 4096


class RngStream:
    """Deterministic stream of uniform draws backed by PCG64.

    Uniforms are drawn in blocks to keep per-step overhead low in the tabular
    training loops.  ``integers(n)`` is derived from one uniform, so the number
    of underlying draws per call is fixed and sequences stay aligned.
    """

    def __init__(self, seed: int):
        self.seed = int(seed)
        self._gen = np.random.Generator(np.random.PCG64(self.seed))
        self._buf: list[float] = []
        self._pos = 0
        self.counter = 0

    def _refill(self) -> None:
        self._buf = self._gen.random(_BLOCK).tolist()
        self._pos = 0

    def uniform(self) -> float:
        if self._pos >= len(self._buf):
            self._refill()
        u = self._buf[self._pos]
        self._pos += 1
        self.counter += 1
        return u

    def integers(self, n: int) -> int:
        """Uniform integer in ``[0, n)``."""
        return min(int(self.uniform() * n), n - 1)

    def choice(self, probs) -> int:
        """Index drawn from a discrete distribution (inverse CDF)."""
        u = self.uniform()
        acc = 0.0
        for i, p in enumerate(probs):
            acc += p
            if u < acc:
                return i
        return len(probs) - 1

    def spawn(self, key: int) -> "RngStream":
        """Independent child stream; same (seed, key) gives the same child."""
        ss = np.random.SeedSequence([self.seed, int(key)])
        return RngStream(int(ss.generate_state(1, dtype=np.uint64)[0]))

    def numpy(self) -> np.random.Generator:
        """A numpy Generator seeded from this stream (for vectorised draws)."""
        return np.random.Generator(np.random.PCG64(self.seed ^ 0x5DEECE66D))


def as_stream(seed_or_rng) -> RngStream:
    if isinstance(seed_or_rng, RngStream):
        return seed_or_rng
    return RngStream(0 if seed_or_rng is None else int(seed_or_rng))
