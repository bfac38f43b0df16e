"""Labeled random streams derived from a single 64-bit seed.

Every stage of the pipeline draws from its own named stream ("matrices",
"instance", "gamma-fill", "greedy", ...) so stages can be replayed
independently and reordering one stage never perturbs another.
"""

import hashlib
import random


def stream(seed: int, label: str) -> random.Random:
    """Return a deterministic RNG for (seed, label).

    The stream seed is a SHA-256 digest of the pair, so distinct labels give
    statistically independent streams and the mapping is stable across
    platforms and Python versions.
    """
    digest = hashlib.sha256(f"{seed}:{label}".encode("utf-8")).digest()
    return random.Random(int.from_bytes(digest[:16], "big"))


def substream(seed: int, label: str, index: int) -> random.Random:
    """Stream for the index-th work chunk of a labeled stage."""
    return stream(seed, f"{label}/{index}")
