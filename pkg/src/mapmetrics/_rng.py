"""Counter-based random streams.

Every random draw in the package comes from a Philox generator keyed by
``(seed, stream, *indices)``, so results do not depend on evaluation order
or on how work is split across processes.
"""

from __future__ import annotations

import zlib

import numpy as np


def _stream_id(name: str) -> int:
    # crc32 is stable across platforms and Python hash seeds
    return zlib.crc32(name.encode())


def make_rng(seed: int, stream: str, *indices: int) -> np.random.Generator:
    ss = np.random.SeedSequence(int(seed), spawn_key=(_stream_id(stream), *map(int, indices)))
    return np.random.Generator(np.random.Philox(ss))
