"""Deterministic random streams.

Every stochastic choice in the library draws from a :class:`Stream` obtained
through :func:`stream`. A stream is keyed by a 64-bit unsigned seed plus a
purpose key (a tag string and optional integer indices, e.g.
``stream(seed, "split", user_index)``), mixed through ``numpy.random.
SeedSequence`` into a PCG64 bit generator.

Only the raw 64-bit PCG64 output is consumed. Uniform doubles, normals,
bounded integers and permutations are derived here with fixed algorithms
(bit shift, Box-Muller, masked rejection, random-keys sort) rather than
through ``numpy.random.Generator`` methods, so identical ``(seed, key)``
pairs reproduce bit-for-bit across platforms and numpy releases.

Stream keys used across the library:

======================  =====================================================
``("split", u)``        per-user interaction shuffle in the data split
``("split",)``          global shuffle for the ``global_random`` split
``("init", name)``      parameter tensor initialisation, keyed by tensor name
``("epoch", e)``        batch shuffling and negative sampling in epoch ``e``
``("synthetic", ...)``  toy-data generators in demos and tests
======================  =====================================================
"""

from __future__ import annotations

import hashlib

import numpy as np

_INV_2_53 = float(2.0**-53)
_TWO_PI = 2.0 * np.pi


def _key_part(part: int | str) -> int:
    if isinstance(part, str):
        return int.from_bytes(hashlib.sha256(part.encode("utf-8")).digest()[:8], "little")
    if isinstance(part, (int, np.integer)):
        if part < 0:
            raise ValueError(f"stream key integers must be non-negative, got {part}")
        return int(part)
    raise TypeError(f"stream key parts must be int or str, got {type(part).__name__}")


def check_seed(seed: int) -> int:
    """Validate a user-supplied seed as a 64-bit unsigned integer."""
    seed = int(seed)
    if not 0 <= seed < 2**64:
        raise ValueError(f"seed must fit in an unsigned 64-bit integer, got {seed}")
    return seed


class Stream:
    """A single deterministic random stream over PCG64 raw output."""

    def __init__(self, seed_sequence: np.random.SeedSequence):
        self._bg = np.random.PCG64(seed_sequence)

    def raw(self, n: int) -> np.ndarray:
        """Next ``n`` raw 64-bit words as uint64."""
        out = self._bg.random_raw(n)
        return np.atleast_1d(np.asarray(out, dtype=np.uint64))

    def uniform(self, shape: int | tuple[int, ...] = ()) -> np.ndarray | float:
        """Uniform float64 in [0, 1): top 53 bits of each raw word."""
        size = int(np.prod(shape)) if shape != () else 1
        vals = (self.raw(size) >> np.uint64(11)).astype(np.float64) * _INV_2_53
        if shape == ():
            return float(vals[0])
        return vals.reshape(shape)

    def normal(self, shape: int | tuple[int, ...] = (), std: float = 1.0) -> np.ndarray | float:
        """Normal(0, std^2) float64 via Box-Muller on raw uniforms."""
        size = int(np.prod(shape)) if shape != () else 1
        pairs = (size + 1) // 2
        # u1 in (0, 1] so log is finite; u2 in [0, 1)
        u1 = ((self.raw(pairs) >> np.uint64(11)).astype(np.float64) + 1.0) * _INV_2_53
        u2 = (self.raw(pairs) >> np.uint64(11)).astype(np.float64) * _INV_2_53
        r = np.sqrt(-2.0 * np.log(u1))
        z = np.concatenate([r * np.cos(_TWO_PI * u2), r * np.sin(_TWO_PI * u2)])[:size]
        z *= std
        if shape == ():
            return float(z[0])
        return z.reshape(shape)

    def randbelow(self, n: int) -> int:
        """Uniform integer in [0, n) by masked rejection on raw words."""
        if n <= 0:
            raise ValueError("randbelow needs a positive bound")
        mask = np.uint64((1 << int(n - 1).bit_length()) - 1) if n > 1 else np.uint64(0)
        while True:
            r = int(self.raw(1)[0] & mask)
            if r < n:
                return r

    def permutation(self, n: int) -> np.ndarray:
        """Random permutation of range(n) by sorting random keys (stable)."""
        keys = self.uniform((n,)) if n else np.empty(0)
        return np.argsort(keys, kind="stable")

    def shuffled(self, values: np.ndarray) -> np.ndarray:
        """Copy of ``values`` with rows permuted."""
        return np.asarray(values)[self.permutation(len(values))]


def stream(seed: int, *key: int | str) -> Stream:
    """Open the deterministic stream identified by ``(seed, key)``."""
    entropy = [check_seed(seed)] + [_key_part(p) for p in key]
    return Stream(np.random.SeedSequence(entropy))
