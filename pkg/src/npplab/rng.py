"""Counter-based random streams.

Every stochastic operation draws from a named stream keyed by
(master seed, stream name, step). Streams are stateless: the generator for
a given key is reconstructed on demand, so a resumed run replays exactly
the draws of the uninterrupted run without serializing RNG state.
"""

from __future__ import annotations

import hashlib

import numpy as np


def _stream_key(seed: int, name: str, step: int) -> int:
    # blake2b is stable across platforms/processes, unlike builtin hash().
    digest = hashlib.blake2b(
        f"{seed}/{name}/{step}".encode(), digest_size=16
    ).digest()
    return int.from_bytes(digest, "little")


def stream(seed: int, name: str, step: int = 0) -> np.random.Generator:
    """Return a fresh Philox generator for (seed, name, step)."""
    return np.random.Generator(np.random.Philox(key=_stream_key(seed, name, step)))
