"""Deterministic, stateless sample generation.

Every uniform number is a pure function of (kind, seed, pixel key, sample
index, dimension), so render results cannot depend on scheduling, batching
or worker count. The generator is a splitmix64-style integer hash evaluated
with numpy uint64 arithmetic, which vectorizes over ray batches.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError

_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_SEED0 = np.uint64(0x853C49E6748FEA9B)
_INV53 = float(2.0 ** -53)

SAMPLER_KINDS = ("independent", "stratified")


def _mix(z):
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def hash_u64(*keys):
    """Combine nonnegative integer keys (scalars or arrays) into a mixed uint64."""
    h = _SEED0
    with np.errstate(over="ignore"):  # uint64 wraparound is the point
        for k in keys:
            h = _mix((h * _M2) ^ np.asarray(k, dtype=np.uint64))
    return h


def hash_float(*keys):
    """Uniform float64 in [0, 1) derived from integer keys."""
    return (hash_u64(*keys) >> np.uint64(11)).astype(np.float64) * _INV53


@dataclass(frozen=True)
class Sampler:
    """Stateless sample source.

    kind: "independent" draws every dimension independently; "stratified"
    stratifies each dimension over the per-pixel sample count (cyclic stratum
    permutation plus jitter, valid for any spp).
    """

    kind: str = "independent"
    seed: int = 0
    spp: int = 1

    def __post_init__(self):
        if self.kind not in SAMPLER_KINDS:
            raise ConfigError(f"unknown sampler kind {self.kind!r}")
        if self.spp < 1:
            raise ConfigError("sampler spp must be >= 1")

    def sample(self, pixel, index, dim):
        """Uniform [0,1) values for (pixel, sample index, dimension) keys.

        Arguments broadcast; the result is a float64 array (or scalar).
        """
        if self.kind == "independent" or self.spp == 1:
            return hash_float(self.seed, pixel, index, dim)
        pixel = np.asarray(pixel, dtype=np.uint64)
        index = np.asarray(index, dtype=np.uint64)
        dim = np.asarray(dim, dtype=np.uint64)
        n = np.uint64(self.spp)
        offset = hash_u64(self.seed, pixel, dim, 0xD1F) % n
        stratum = (index + offset) % n
        jitter = hash_float(self.seed, pixel, index, dim)
        return (stratum.astype(np.float64) + jitter) / float(self.spp)

    def stream(self, pixel, index):
        """Sequential per-path view used by the scalar integrators."""
        return SampleStream(self, int(pixel), int(index))


class SampleStream:
    """Dimension-counting adapter over a stateless Sampler."""

    __slots__ = ("sampler", "pixel", "index", "dim")

    def __init__(self, sampler, pixel, index):
        self.sampler = sampler
        self.pixel = pixel
        self.index = index
        self.dim = 0

    def next_1d(self):
        u = float(self.sampler.sample(self.pixel, self.index, self.dim))
        self.dim += 1
        return u

    def next_2d(self):
        return self.next_1d(), self.next_1d()
