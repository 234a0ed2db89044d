"""Named, seed-derived random streams."""

import zlib

import numpy as np


def stream_key(name: str) -> int:
    return zlib.crc32(name.encode())


def substream(seed: int, name: str, *keys: int) -> np.random.Generator:
    """Generator that depends only on ``(seed, name, *keys)``."""
    entropy = [int(seed) & 0xFFFFFFFFFFFFFFFF, stream_key(name), *(int(k) for k in keys)]
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))
