"""Counter-based seed splitting.

Every stochastic call receives a 64-bit root seed plus a tuple of integer
counters (round index, attempt index, purpose tag).  The stream for a given
(seed, counters) pair is ``PCG64(SeedSequence(seed, spawn_key=counters))``,
so streams never overlap and a run is reproducible bit for bit.
"""

from __future__ import annotations

import numpy as np

# purpose tags keep the streams of different consumers apart
NW_SAMPLING = 1
ROUNDING = 2
PROBES = 3
GENERATOR = 4


def stream(seed: int, *counters: int) -> np.random.Generator:
    ss = np.random.SeedSequence(int(seed) & (2**64 - 1), spawn_key=tuple(int(c) for c in counters))
    return np.random.Generator(np.random.PCG64(ss))


def derive_seed(seed: int, *counters: int) -> int:
    """A 64-bit integer seed for a child stream (stored in reports)."""
    ss = np.random.SeedSequence(int(seed) & (2**64 - 1), spawn_key=tuple(int(c) for c in counters))
    return int(ss.generate_state(1, dtype=np.uint64)[0])
