"""Seedable, splittable random streams.

Every stochastic rule in the package draws from an :class:`RngStream`.  A
stream wraps a numpy ``Generator`` (PCG64) built from a ``SeedSequence`` whose
spawn key records the chain of labels used to derive it, so

* the same seed always reproduces the same sequence, and
* ``stream.substream("station1")`` yields the same child sequence no matter
  how many numbers the parent (or any sibling) has already drawn.

Streams are single-owner: give each parallel run its own substream.
"""

import hashlib
import math

import numpy as np

__all__ = ["RngStream", "label_key"]

_SEED_MASK = (1 << 64) - 1


def label_key(label):
    """Map a text label to a stable 32-bit integer spawn key."""
    digest = hashlib.blake2b(label.encode("utf-8"), digest_size=4).digest()
    return int.from_bytes(digest, "little")


class RngStream:
    """A reproducible pseudo-random stream.

    Parameters
    ----------
    seed : int
        Unsigned 64-bit seed.
    path : tuple of str
        Labels of the substream chain leading to this stream (empty for a
        root stream).
    """

    def __init__(self, seed=0, path=()):
        seed = int(seed)
        if not 0 <= seed <= _SEED_MASK:
            raise ValueError(f"seed must be an unsigned 64-bit integer, got {seed}")
        self.seed = seed
        self.path = tuple(path)
        seq = np.random.SeedSequence(
            entropy=seed, spawn_key=tuple(label_key(p) for p in self.path)
        )
        self._gen = np.random.Generator(np.random.PCG64(seq))

    def __repr__(self):
        return f"RngStream(seed={self.seed}, path={self.path!r})"

    @property
    def generator(self):
        """The underlying ``numpy.random.Generator`` (shared state)."""
        return self._gen

    def substream(self, label):
        """Return an independent child stream identified by ``label``.

        The child depends only on (seed, path, label), never on the parent's
        position, and drawing from it leaves the parent untouched.
        """
        label = str(label)
        if not label:
            raise ValueError("substream label must be nonempty")
        return RngStream(self.seed, self.path + (label,))

    def uniform_open(self, size=None):
        """Uniform number(s) on the open interval (0, 1).

        Exact zeros from the underlying [0, 1) generator are redrawn.
        """
        if size is None:
            r = self._gen.random()
            while r == 0.0:
                r = self._gen.random()
            return r
        r = self._gen.random(size)
        zero = r == 0.0
        while zero.any():
            r[zero] = self._gen.random(int(zero.sum()))
            zero = r == 0.0
        return r

    def uniform_angle(self, size=None):
        """Uniform angle(s) on [0, 2*pi)."""
        if size is None:
            return 2.0 * math.pi * self._gen.random()
        return 2.0 * np.pi * self._gen.random(size)

    def random_bit(self, size=None):
        """Fair bit(s) in {0, 1}, one uniform draw per bit."""
        if size is None:
            return 1 if self._gen.random() >= 0.5 else 0
        return (self._gen.random(size) >= 0.5).astype(np.int8)
