"""Named, splittable random streams.

Every random draw in the package comes from a ``numpy.random.Generator`` backed
by the counter-based Philox bit generator.  Streams are derived from a root
seed plus a path of keys (strings or integers), so two components never share
a stream and results do not depend on the order in which streams are created.
"""

from __future__ import annotations

import hashlib

import numpy as np


def _key_to_int(key) -> int:
    if isinstance(key, (bool, np.bool_)):
        return int(key)
    if isinstance(key, (int, np.integer)):
        if key < 0:
            raise ValueError("integer stream keys must be non-negative")
        return int(key)
    digest = hashlib.blake2b(str(key).encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def seed_sequence(seed: int, *keys) -> np.random.SeedSequence:
    return np.random.SeedSequence(
        entropy=int(seed) & 0xFFFFFFFFFFFFFFFF,
        spawn_key=tuple(_key_to_int(k) for k in keys),
    )


def derive_rng(seed: int, *keys) -> np.random.Generator:
    """Generator for the stream named ``keys`` under ``seed``."""
    return np.random.Generator(np.random.Philox(seed_sequence(seed, *keys)))


def derive_seed(seed: int, *keys) -> int:
    """A 63-bit integer seed for the stream named ``keys`` under ``seed``."""
    return int(seed_sequence(seed, *keys).generate_state(1, np.uint64)[0] >> np.uint64(1))


def fisher_yates(n: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform random permutation of ``range(n)`` (Durstenfeld's in-place shuffle)."""
    perm = np.arange(n)
    if n < 2:
        return perm
    # j_i uniform on [0, i] for i = n-1 .. 1
    js = rng.integers(0, np.arange(n - 1, 0, -1) + 1)
    for i, j in zip(range(n - 1, 0, -1), js):
        perm[i], perm[j] = perm[j], perm[i]
    return perm


class RowStreams:
    """One independent generator per batch row.

    Layers that draw randomness call ``random``/``standard_normal`` with a
    shape whose leading axis is the batch; each row is drawn from its own
    stream, so a row's draws do not depend on what else is in the batch.
    """

    per_row = True

    def __init__(self, generators):
        self.generators = list(generators)

    def __len__(self):
        return len(self.generators)

    def _stack(self, method, shape):
        if shape[0] != len(self.generators):
            raise ValueError(
                f"leading dimension {shape[0]} != number of row streams {len(self.generators)}"
            )
        return np.stack([getattr(g, method)(shape[1:]) for g in self.generators])

    def random(self, shape):
        return self._stack("random", tuple(shape))

    def standard_normal(self, shape):
        return self._stack("standard_normal", tuple(shape))
