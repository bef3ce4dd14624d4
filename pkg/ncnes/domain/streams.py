"""Deterministic random streams.

Every random draw in a run comes from a generator keyed by
(master seed, purpose, process, iteration, sample, repeat). The key does not
depend on which thread or worker performs the draw, so serial, island and
hybrid execution see identical numbers.
"""

from dataclasses import dataclass, replace

import numpy as np

# Purpose values are part of the stream key and must stay stable.
SAMPLE = 0
REEVALS = 1
NOISE = 2
EPISODE = 3
INIT = 4
MUTATE = 5


@dataclass(frozen=True)
class Stream:
    seed: int
    purpose: int
    process: int = 0
    iteration: int = 0
    sample: int = 0
    repeat: int = 0

    def __post_init__(self):
        if self.seed < 0 or self.seed >= 2 ** 64:
            raise ValueError(f"seed must be an unsigned 64-bit integer: {self.seed!r}")

    def rng(self):
        """Fresh generator for this key. Same key → same sequence."""
        ss = np.random.SeedSequence(
            entropy=self.seed,
            spawn_key=(self.purpose, self.process, self.iteration, self.sample, self.repeat),
        )
        return np.random.Generator(np.random.PCG64(ss))

    def child(self, **fields):
        return replace(self, **fields)
