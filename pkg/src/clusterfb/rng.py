"""Counter-based random streams.

A stream is identified by the master seed plus a path of integers (e.g. the
index of a K value in a sweep). The path is hashed into a 128-bit Philox key;
independent blocks of drops then differ only in the Philox counter, so block
``b`` is reproducible on its own, in any order and on any worker.
"""

import numpy as np

# Blocks are separated by 2**128 counter increments, far more than any block draws.
_BLOCK_WORD = 2


def philox_key(seed, *path):
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(p) for p in path))
    return ss.generate_state(2, np.uint64)


def block_generator(seed, block, *path):
    """Generator for block `block` of the stream ``(seed, *path)``."""
    counter = np.zeros(4, dtype=np.uint64)
    counter[_BLOCK_WORD] = int(block)
    return np.random.Generator(np.random.Philox(key=philox_key(seed, *path), counter=counter))


def stream_generator(seed, *path):
    """A single sequential generator for the stream ``(seed, *path)``."""
    return block_generator(seed, 0, *path)
