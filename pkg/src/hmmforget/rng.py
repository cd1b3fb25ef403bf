"""Counter-based random streams.

Every stochastic routine in the package draws from a stream keyed by
``(master_seed, replication, step)``.  Streams are independent Philox
generators, so serial and parallel execution over replications (or steps)
produce identical draws.
"""

from __future__ import annotations

import numpy as np


def substream(seed: int, *path: int) -> np.random.Generator:
    """Return a fresh generator for the given (seed, *path) key."""
    ss = np.random.SeedSequence([int(seed), *[int(p) for p in path]])
    return np.random.Generator(np.random.Philox(ss))
