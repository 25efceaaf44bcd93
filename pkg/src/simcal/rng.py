"""Deterministic random-stream derivation.

Every consumer of randomness derives its own stream from a master seed
plus a stable label and counter, so runs reproduce bit-for-bit no matter
how work is scheduled.
"""

from __future__ import annotations

import zlib

import numpy as np

__all__ = ["substream", "stream_seed"]


def _label_id(label: str) -> int:
    return zlib.crc32(label.encode("utf-8"))


def stream_seed(master_seed: int, label: str, *counters: int) -> np.random.SeedSequence:
    """Seed sequence for the (label, counters...) stream under a master seed."""
    entropy = [int(master_seed), _label_id(label), *[int(c) for c in counters]]
    return np.random.SeedSequence(entropy)


def substream(master_seed: int, label: str, *counters: int) -> np.random.Generator:
    """Independent generator for the given stream coordinates."""
    return np.random.Generator(np.random.PCG64(stream_seed(master_seed, label, *counters)))
