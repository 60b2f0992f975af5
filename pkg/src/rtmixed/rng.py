"""Random stream derivation.

Every random quantity in the package comes from a Philox-4x64 counter-based
generator keyed by ``SeedSequence(seed, spawn_key=keys)``. A stream is fully
identified by the user seed plus a tuple of small integers naming its role
(chain id, shard index, replicate index ...), so results do not depend on
how work is split or ordered.
"""

import numpy as np

# Role tags used as the first spawn-key element.
CHAIN = 1
LOGML = 2
PRIOR_FRACTION = 3
SIMULATE = 4
RECOVERY = 5


def stream(seed, *keys):
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in keys))
    return np.random.Generator(np.random.Philox(ss))


def child_seed(seed, *keys):
    """A 63-bit integer seed derived deterministically from ``seed`` and ``keys``."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in keys))
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))
