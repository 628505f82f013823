"""One root seed, many independent streams.

Every consumer of randomness asks for a generator keyed by a fixed stream id
plus counters (epoch, view, restart, ...). Keys are spawn keys of a
``numpy.random.SeedSequence`` so streams are independent and stable across
platforms.
"""

import numpy as np

INIT = 1
KMEANS = 2
BATCH = 3
GENERATOR = 4
PROBE = 5
THEORY = 6


def stream(seed, *key):
    """Return a ``Generator`` for the stream ``key`` under root ``seed``."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.default_rng(ss)
