"""Counter-based random number streams.

All Monte Carlo code in this package derives randomness from Philox
generators keyed on (seed, stream, chunk).  Work is split into fixed-size
chunks whose generators depend only on their chunk index, so results are
bit-identical no matter how many worker threads process the chunks.
"""

import numpy as np

# Samples per chunk.  Fixed: changing this changes every sampled stream.
CHUNK_SIZE = 1024

_MASK64 = (1 << 64) - 1


def chunk_generator(seed: int, stream: int, chunk: int) -> np.random.Generator:
    """Generator for one (seed, stream, chunk) triple.

    The 128-bit Philox key packs the user seed in the high 64 bits and
    (stream, chunk) in the low 64 bits.
    """
    key = ((seed & _MASK64) << 64) | ((stream & 0xFFFFFFFF) << 32) | (chunk & 0xFFFFFFFF)
    return np.random.Generator(np.random.Philox(key=key))


def n_chunks(total: int) -> int:
    return (total + CHUNK_SIZE - 1) // CHUNK_SIZE


def chunk_bounds(chunk: int, total: int) -> tuple[int, int]:
    """Half-open index range [lo, hi) of samples covered by a chunk."""
    lo = chunk * CHUNK_SIZE
    return lo, min(lo + CHUNK_SIZE, total)
