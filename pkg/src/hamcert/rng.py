"""Reproducible counter-based RNG streams.

Every stochastic operation in the package takes an explicit
`numpy.random.Generator`.  Streams are Philox (counter-based) and are
derived from a root seed plus an integer path, so concurrent trials get
provably disjoint streams and any run is bit-reproducible from
(seed, path).
"""

from __future__ import annotations

import numpy as np


def stream(seed: int, *path: int) -> np.random.Generator:
    """Philox generator for the given root seed and split path.

    ``stream(seed)`` is the root stream; ``stream(seed, trial)`` or
    ``stream(seed, trial, step)`` are children that never collide with
    each other or the root.
    """
    ss = np.random.SeedSequence(entropy=seed, spawn_key=tuple(path))
    return np.random.Generator(np.random.Philox(ss))
