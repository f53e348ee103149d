"""Counter-based random streams derived from one master seed.

Stream layout: every consumer asks for ``stream(master, purpose, *counters)``.
``purpose`` is a short string hashed with CRC32 and counters are non-negative
integers (iteration number, rung index, ...).  The resulting
``SeedSequence([master, crc32(purpose), *counters])`` is independent of how
many other streams were drawn, so results do not depend on scheduling.
"""
from __future__ import annotations

import zlib

import numpy as np


def stream_key(master: int, purpose: str, *counters: int) -> list[int]:
    return [int(master), zlib.crc32(purpose.encode()), *(int(c) for c in counters)]


def stream(master: int, purpose: str, *counters: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(stream_key(master, purpose, *counters)))
