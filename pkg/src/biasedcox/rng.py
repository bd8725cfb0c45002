"""Keyed random streams.

Every stochastic step draws from a Philox generator keyed by the run seed plus
a tuple of integers (replicate index, replication index, ...). Results depend
only on the key, never on scheduling order or worker count.
"""
import numpy as np


def stream(seed, *key):
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))
