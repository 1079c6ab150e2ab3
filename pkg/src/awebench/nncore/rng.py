"""Seeded random streams with named derivation."""

import hashlib

import numpy as np


def derive_seed(seed, name):
    """Stable 64-bit seed for the sub-stream ``name`` of ``seed``."""
    digest = hashlib.blake2b(f"{int(seed)}:{name}".encode(), digest_size=8).digest()
    return int.from_bytes(digest, "little")


class Rng:
    """Deterministic random stream (PCG64) that counts its draws.

    Identical seeds and identical call sequences give identical outputs.
    ``derive(name)`` gives an independent child stream whose seed depends only
    on this stream's seed and the name, never on how many draws were made.
    """

    algorithm = "PCG64"

    def __init__(self, seed):
        self.seed = int(seed) & 0xFFFFFFFFFFFFFFFF
        self.position = 0
        self._gen = np.random.Generator(np.random.PCG64(self.seed))

    def __repr__(self):
        return f"Rng({self.algorithm}, seed={self.seed}, position={self.position})"

    def derive(self, name):
        return Rng(derive_seed(self.seed, name))

    def _tick(self):
        self.position += 1
        return self._gen

    def uniform(self, low=0.0, high=1.0, size=None):
        return self._tick().uniform(low, high, size)

    def normal(self, loc=0.0, scale=1.0, size=None):
        return self._tick().normal(loc, scale, size)

    def integers(self, low, high=None, size=None):
        return self._tick().integers(low, high, size)

    def random(self, size=None):
        return self._tick().random(size)

    def permutation(self, n):
        return self._tick().permutation(n)

    def choice(self, a, size=None, replace=True, p=None):
        return self._tick().choice(a, size=size, replace=replace, p=p)

    def dirichlet(self, alpha, size=None):
        return self._tick().dirichlet(alpha, size)
