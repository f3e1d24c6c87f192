"""Reproducible random streams.

Every stream is a Philox (counter-based) generator keyed by the master seed
plus a tuple of labels, so a replica's stream depends only on *which*
replica it is and never on how work was scheduled across workers.
"""

from __future__ import annotations

import os
import zlib

import numpy as np

# paths and reference samples are drawn in fixed-size blocks; block k always
# gets the same stream regardless of worker count
BLOCK_SIZE = 256


def _label(key) -> int:
    if isinstance(key, (int, np.integer)):
        return int(key)
    if isinstance(key, float):
        return zlib.crc32(repr(key).encode())
    return zlib.crc32(str(key).encode())


def stream(seed: int, *keys) -> np.random.Generator:
    """Generator for the sub-stream ``keys`` of master ``seed``."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(_label(k) for k in keys))
    return np.random.Generator(np.random.Philox(ss))


def block_ranges(count: int, block: int = BLOCK_SIZE):
    return [(lo, min(lo + block, count)) for lo in range(0, count, block)]


def worker_count(requested: int | None = None) -> int:
    """Worker cap: explicit request, else ``CHAOS_APPROX_THREADS``, else CPUs."""
    if requested is not None:
        return max(1, int(requested))
    env = os.environ.get("CHAOS_APPROX_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return max(1, min(8, os.cpu_count() or 1))
