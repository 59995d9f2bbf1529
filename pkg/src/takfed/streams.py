"""Named deterministic RNG streams.

Every stochastic call site in the simulator draws from a stream keyed by
(master seed, purpose tag, ...identifiers). There is no global mutable RNG:
two call sites with different keys get statistically independent generators,
and the same key always reproduces the same draws regardless of execution
order or thread count. Keys are hashed with SHA-256 so the mapping is stable
across platforms and Python processes (unlike the builtin salted ``hash``).
"""

from __future__ import annotations

import hashlib

import numpy as np


def stream(master_seed: int, *tags: object) -> np.random.Generator:
    """Return the generator keyed by ``(master_seed, *tags)``.

    Tags may be strings or integers (round indices, prototype names, client
    ids). Each distinct key yields an independent, reproducible stream.
    """
    h = hashlib.sha256()
    h.update(str(int(master_seed)).encode("ascii"))
    for tag in tags:
        h.update(b"\x1f")
        h.update(str(tag).encode("utf-8"))
    entropy = int.from_bytes(h.digest(), "little")
    return np.random.default_rng(np.random.SeedSequence(entropy))
