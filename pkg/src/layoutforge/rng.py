"""Counter-based random streams.

Every random draw in the package comes from a Philox4x64-10 generator keyed
by ``(seed, stream)``.  Philox is counter-based, so a stream can be rebuilt
in any language from the two integers alone; no global state is consulted.
"""

import zlib

import numpy as np

_MASK64 = (1 << 64) - 1


def stream_id(*parts) -> int:
    """Fold a tuple of ints/strings into a 64-bit stream id (CRC32 chained)."""
    acc = 0
    for p in parts:
        if isinstance(p, str):
            v = zlib.crc32(p.encode("utf-8"))
        else:
            v = int(p) & _MASK64
        acc = ((acc * 1_000_003) ^ v) & _MASK64
    return acc


def make_rng(seed: int, *stream) -> np.random.Generator:
    """Philox generator keyed by ``seed`` (low 64 bits) and ``stream`` (high 64 bits)."""
    key = (int(seed) & _MASK64) | (stream_id(*stream) << 64)
    return np.random.Generator(np.random.Philox(key=key))
