"""Named random substreams derived from one master seed.

Every consumer of randomness (data noise, each round's chain, each round's
random sensor draw) gets its own stream addressed by a string name.  Streams
are independent of the order in which they are created, which is what lets
two strategy arms share the identical noise realization: they both ask for
the "data-noise" stream of the same master seed.
"""
from __future__ import annotations

import hashlib

import numpy as np


def substream(master_seed: int, name: str) -> np.random.Generator:
    """Return the PCG64 generator for (master_seed, name).

    The name is hashed to a spawn key, so distinct names give independent
    streams and the same name always gives the same stream.
    """
    digest = hashlib.sha256(name.encode("utf-8")).digest()
    spawn_key = tuple(int.from_bytes(digest[4 * i : 4 * i + 4], "big") for i in range(4))
    seq = np.random.SeedSequence(master_seed, spawn_key=spawn_key)
    return np.random.Generator(np.random.PCG64(seq))
