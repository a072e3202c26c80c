"""Deterministic stream splitting from a 64-bit master seed.

Every estimator partitions its work into chunks whose count depends only on
the requested budget (never on the worker count); chunk i consumes the
substream (master_seed, i).  Reductions run in chunk-index order, so results
are bit-identical for a fixed (master seed, budget) regardless of scheduling.
"""

import numpy as np


def substream(master_seed, *key):
    return np.random.default_rng(np.random.SeedSequence(entropy=int(master_seed),
                                                        spawn_key=tuple(int(k) for k in key)))


def chunked(total, chunk_size):
    """Deterministic chunk sizes [chunk_size, ..., remainder]."""
    total = int(total)
    chunk_size = int(chunk_size)
    out = []
    while total > 0:
        out.append(min(chunk_size, total))
        total -= out[-1]
    return out
