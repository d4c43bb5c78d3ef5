"""Counter-based random streams keyed by (seed, shot index).

Each shot owns one Philox-4x64 counter block, i.e. four uniform doubles.
Shot ``i`` of seed ``s`` draws the same numbers no matter which worker
evaluates it or in what order, so shot loops can be split freely.
"""
from __future__ import annotations

import numpy as np

DRAWS_PER_SHOT = 4
_U64 = (1 << 64) - 1


def _bit_generator(seed: int, start: int) -> np.random.Philox:
    if not 0 <= int(seed) <= _U64:
        raise ValueError(f"seed must be an unsigned 64-bit integer, got {seed}")
    bg = np.random.Philox(key=int(seed))
    if start:
        bg.advance(int(start))
    return bg


def shot_uniforms(seed: int, start: int, stop: int) -> np.ndarray:
    """Uniforms in [0, 1) for shots ``start..stop-1``, shape (n, 4)."""
    n = int(stop) - int(start)
    if n < 0:
        raise ValueError("stop must not precede start")
    gen = np.random.Generator(_bit_generator(seed, start))
    return gen.random(n * DRAWS_PER_SHOT).reshape(n, DRAWS_PER_SHOT)


class ShotStream:
    """Sequential view over the per-shot blocks, for code that draws one shot at a time."""

    def __init__(self, seed: int, shot: int = 0):
        self.seed = int(seed)
        self.shot = int(shot)
        self._block = shot_uniforms(self.seed, self.shot, self.shot + 1)[0]
        self._used = 0

    def random(self) -> float:
        if self._used == DRAWS_PER_SHOT:
            self.next_shot()
        value = float(self._block[self._used])
        self._used += 1
        return value

    def next_shot(self) -> None:
        self.shot += 1
        self._block = shot_uniforms(self.seed, self.shot, self.shot + 1)[0]
        self._used = 0


def as_uniform_source(rng):
    """Accept a ShotStream, a numpy Generator, or an int seed and return a zero-arg uniform draw."""
    if isinstance(rng, ShotStream):
        return rng.random
    if isinstance(rng, np.random.Generator):
        return rng.random
    if isinstance(rng, (int, np.integer)):
        return ShotStream(int(rng)).random
    if callable(rng):
        return rng
    raise TypeError(f"unsupported random source {type(rng).__name__}")
