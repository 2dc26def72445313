"""Deterministic named RNG substreams.

All randomness in the package flows from one root seed.  A component asks
for a substream by a label path, e.g. ``substream(seed, "noise", "rx3")``,
and gets a generator that is independent of every other label path but
bit-reproducible across runs and platforms.  Labels are hashed with
SHA-256, so the mapping does not depend on PYTHONHASHSEED.
"""

import hashlib

import numpy as np


def _label_word(label) -> int:
    digest = hashlib.sha256(str(label).encode("utf-8")).digest()
    return int.from_bytes(digest[:4], "little")


def substream(root_seed: int, *labels) -> np.random.Generator:
    """Return a generator for the (root_seed, *labels) stream."""
    entropy = [int(root_seed) & 0xFFFFFFFF] + [_label_word(l) for l in labels]
    return np.random.default_rng(np.random.SeedSequence(entropy))


def spawn_seed(root_seed: int, *labels) -> int:
    """A derived integer seed, for APIs that take a seed rather than a rng."""
    digest = hashlib.sha256(
        ("/".join([str(root_seed)] + [str(l) for l in labels])).encode("utf-8")
    ).digest()
    return int.from_bytes(digest[:4], "little")
