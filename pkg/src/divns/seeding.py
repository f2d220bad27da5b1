"""Deterministic RNG stream derivation.

Every stochastic stage draws from its own generator keyed by a tuple of
integers (master seed first, then a stage tag, then epoch/user indices as
needed). Streams are independent, so per-user work is schedule independent
and two runs with the same master seed are bit-identical.
"""

from __future__ import annotations

import numpy as np

# stage tags; keys always start (seed, tag, ...) so namespaces cannot collide
SPLIT = 1
SAMPLING = 2
DIAGNOSTICS = 3
SHUFFLE = 4
SYNTH = 5


def stream(*key: int) -> np.random.Generator:
    """Return a generator keyed by non-negative integers."""
    if len(key) < 2:
        raise ValueError("stream keys need a seed and a stage tag")
    if any(int(k) < 0 for k in key):
        raise ValueError(f"stream key must be non-negative, got {key}")
    return np.random.default_rng(np.random.SeedSequence([int(k) for k in key]))
