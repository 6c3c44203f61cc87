"""Named random streams derived from a single run seed.

Every stochastic step (edge masking at epoch 7, walk generation for one
metapath, the k-th evaluation split, ...) pulls its own generator via
``derive_rng(seed, *labels)``. Streams with different labels are
statistically independent, so ablating one strategy never shifts the
draws of another, and any epoch can be replayed in isolation.
"""

from __future__ import annotations

import zlib

import numpy as np


def derive_rng(seed: int, *labels: object) -> np.random.Generator:
    """Return a generator keyed by ``seed`` and a tuple of labels.

    Labels may be strings or integers; strings are hashed with crc32 so
    the derivation does not depend on Python's per-process str hashing.
    """
    words = [int(seed)]
    for label in labels:
        if isinstance(label, (int, np.integer)):
            words.append(int(label))
        else:
            words.append(zlib.crc32(str(label).encode("utf-8")))
    return np.random.default_rng(np.random.SeedSequence(words))
