"""Per-purpose, per-agent random streams derived from one master seed.

Streams are keyed by ``(seed, purpose, agent)`` through numpy's
``SeedSequence``; the purpose tag is hashed with CRC32 so keys are stable
across processes and Python versions.  Two runs that share a seed also share
the ``"dt"`` stream of every agent, whatever else they draw.
"""

from __future__ import annotations

import zlib

import numpy as np

GLOBAL = -1


def stream(seed: int, purpose: str, agent: int = GLOBAL) -> np.random.Generator:
    tag = zlib.crc32(purpose.encode("utf-8"))
    key = (tag, agent + 1)
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy=int(seed), spawn_key=key)))


def agent_streams(seed: int, purpose: str, n: int) -> list[np.random.Generator]:
    return [stream(seed, purpose, i) for i in range(n)]
