"""Named RNG substreams derived from a single 64-bit seed.

Every randomized stage draws from ``substream(seed, stage_name)`` so that
re-running one pipeline stage never perturbs another stage's draws.
"""

from __future__ import annotations

import hashlib

import numpy as np

_MASK64 = (1 << 64) - 1


def substream(seed: int, name: str) -> np.random.Generator:
    """Return a deterministic, stage-independent generator for (seed, name)."""
    key = (int(seed) & _MASK64).to_bytes(8, "little")
    digest = hashlib.blake2b(name.encode("utf-8"), digest_size=16, key=key).digest()
    return np.random.default_rng(int.from_bytes(digest, "little"))
