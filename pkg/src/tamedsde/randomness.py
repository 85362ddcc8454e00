"""Deterministic, counter-addressable Gaussian increment streams.

Every path owns an independent Philox4x64 stream keyed by
``(master_seed, path_index * 4 + purpose_id)``; distinct key tuples give
statistically independent streams, identical tuples replay bit-identically.
Standard normals are produced by the inverse-CDF transform

    u = ((raw >> 11) + 0.5) * 2**-53,   z = ndtri(u),

which consumes exactly one 64-bit Philox word per normal.  This choice is
load-bearing: golden files and the Brownian coupling across step sizes depend
on the one-word-per-normal mapping, so it must not be swapped for a
rejection-based sampler (ziggurat et al.) without regenerating every frozen
expectation.

Because draws are a pure function of (key, stream position), any worker may
generate any (path, step) block and ensemble results cannot depend on the
thread count.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.random import Generator, Philox
from scipy.special import ndtri

__all__ = [
    "SeedSpec",
    "standard_normals",
    "gaussian_increments",
    "aggregate_increments",
    "auxiliary_rng",
]

#: stream purposes: path driving noise vs. auxiliary sampling (domain boxes,
#: spheres, stencils).  At most 4 purposes fit the key packing below.
_PURPOSES = {"increments": 0, "aux": 1}


@dataclass(frozen=True)
class SeedSpec:
    """Addresses one pseudo-random stream.

    master_seed : 64-bit experiment seed (CLI flag --seed)
    path_index  : which sample path the stream drives
    purpose     : 'increments' for Brownian noise, 'aux' for everything else
    """

    master_seed: int
    path_index: int = 0
    purpose: str = "increments"

    def __post_init__(self):
        if not 0 <= int(self.master_seed) < 2**64:
            raise ValueError("master_seed must fit in 64 bits")
        if self.path_index < 0:
            raise ValueError("path_index must be nonnegative")
        if self.purpose not in _PURPOSES:
            raise ValueError(f"unknown purpose {self.purpose!r}")

    def key(self) -> np.ndarray:
        tag = int(self.path_index) * 4 + _PURPOSES[self.purpose]
        return np.array([int(self.master_seed), tag], dtype=np.uint64)


def _bit_generator(seed: SeedSpec) -> Philox:
    return Philox(key=seed.key())


def standard_normals(seed: SeedSpec, count: int) -> np.ndarray:
    """First ``count`` N(0,1) variates of the stream.

    Prefix property: the first k outputs are identical for any count >= k,
    which is what couples simulations at different step counts.
    """
    if count < 0:
        raise ValueError("count must be nonnegative")
    if count == 0:
        return np.empty(0)
    raw = _bit_generator(seed).random_raw(count)
    u = ((raw >> np.uint64(11)) + 0.5) * 2.0**-53
    return ndtri(u)


def gaussian_increments(
    seed: SeedSpec, step_count: int, dt: float, dim: int
) -> np.ndarray:
    """(step_count, dim) array of N(0, dt) Brownian increments."""
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    if step_count < 1:
        raise ValueError("step_count must be >= 1")
    if dim < 1:
        raise ValueError("dim must be >= 1")
    z = standard_normals(seed, step_count * dim)
    return z.reshape(step_count, dim) * np.sqrt(dt)


def aggregate_increments(fine: np.ndarray, ratio: int) -> np.ndarray:
    """Sum consecutive blocks of ``ratio`` fine increments into coarse ones.

    Summation within each block is strictly left to right, so the result is
    the exact float sequence a coarse-grid simulation would consume from the
    same Brownian path.  Works on (..., steps, dim) stacks; the steps axis is
    the second to last.
    """
    fine = np.asarray(fine)
    if ratio < 1:
        raise ValueError("ratio must be >= 1")
    if fine.ndim < 2:
        raise ValueError("expected an (..., steps, dim) array")
    steps = fine.shape[-2]
    if steps % ratio != 0:
        raise ValueError(f"step count {steps} not divisible by ratio {ratio}")
    if ratio == 1:
        return fine.copy()
    shp = fine.shape[:-2] + (steps // ratio, ratio, fine.shape[-1])
    blocks = fine.reshape(shp)
    coarse = blocks[..., 0, :].copy()
    for j in range(1, ratio):
        coarse += blocks[..., j, :]
    return coarse


def auxiliary_rng(master_seed: int, stream: int = 0) -> Generator:
    """numpy Generator for auxiliary sampling, keyed off the master seed.

    Uses the 'aux' purpose with ``stream`` in place of a path index so that
    auxiliary draws never collide with path noise.
    """
    return Generator(_bit_generator(SeedSpec(master_seed, stream, "aux")))
