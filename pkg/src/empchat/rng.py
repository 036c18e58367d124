"""Purpose-tagged deterministic RNG streams derived from one base seed.

Every stochastic consumer (distractor sampling, init, dropout, shuffling,
sampling) pulls an independent stream keyed by string/int tags, so runs are
reproducible and resumable without persisting generator state.
"""

import zlib

import numpy as np


def stream(seed, *tags):
    """A numpy Generator for (seed, tags); same arguments always give the same stream."""
    key = tuple(zlib.crc32(str(t).encode("utf-8")) for t in tags)
    return np.random.default_rng(np.random.SeedSequence(entropy=int(seed), spawn_key=key))
