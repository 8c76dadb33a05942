"""Named, order-independent random streams derived from one integer seed."""
from __future__ import annotations

import zlib

import numpy as np

__all__ = ["stream_key", "child_seed", "child_rng"]


def stream_key(name: str) -> int:
    return zlib.crc32(name.encode("utf-8"))


def _sequence(seed: int, names) -> np.random.SeedSequence:
    return np.random.SeedSequence(int(seed), spawn_key=tuple(stream_key(str(n)) for n in names))


def child_seed(seed: int, *names) -> int:
    """A 63-bit integer seed for the stream ``names`` under ``seed``."""
    return int(_sequence(seed, names).generate_state(1, dtype=np.uint64)[0]) >> 1


def child_rng(seed: int, *names) -> np.random.Generator:
    return np.random.default_rng(_sequence(seed, names))
