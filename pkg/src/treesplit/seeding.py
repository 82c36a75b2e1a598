"""Deterministic RNG stream derivation.

Every stochastic routine in this package derives its generators through
`derive_rng`, keyed by a user seed plus small integer stream/batch counters.
The construction is a pure function of its arguments, so results never depend
on execution order or thread count.
"""
from __future__ import annotations

import numpy as np

# Stream tags, one per consumer.  Keeping them in one place guarantees two
# different estimators never share a stream even under the same seed.
STREAM_TREE = 1
STREAM_REP8 = 2
STREAM_REP12 = 3
STREAM_PSI = 4
STREAM_QADIC = 5
STREAM_POISSON_QADIC = 6
STREAM_F2_MC = 7
STREAM_VARDIRECT = 8
STREAM_COUPLED = 9


def derive_rng(seed: int, *key: int) -> np.random.Generator:
    """Return a Generator for (seed, key...), independent across keys."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.PCG64(ss))
