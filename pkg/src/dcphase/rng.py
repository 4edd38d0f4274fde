"""Portable seeded random streams.

Every random draw in the package goes through a PCG64 bit generator.  Normal
deviates are produced with the Box-Muller transform applied to the
generator's double-precision uniforms, so a given seed yields the same
numbers on every platform and numpy release that keeps PCG64 stable.
"""

from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(int(seed) & MASK64))


def standard_normal(rng: np.random.Generator, size) -> np.ndarray:
    """Draw standard normal deviates by Box-Muller on ``rng.random``.

    Uniform pairs ``(u1, u2)`` map to ``r cos(2 pi u2)`` and
    ``r sin(2 pi u2)`` with ``r = sqrt(-2 log(1 - u1))``; both outputs are
    used, in that order, and the array is filled in C order.
    """
    shape = (size,) if np.isscalar(size) else tuple(size)
    count = int(np.prod(shape, dtype=np.int64))
    pairs = (count + 1) // 2
    u = rng.random(2 * pairs)
    u1, u2 = u[0::2], u[1::2]
    r = np.sqrt(-2.0 * np.log1p(-u1))
    theta = 2.0 * np.pi * u2
    out = np.empty(2 * pairs)
    out[0::2] = r * np.cos(theta)
    out[1::2] = r * np.sin(theta)
    return out[:count].reshape(shape)


def uniform_symmetric(rng: np.random.Generator, half_width: float, size) -> np.ndarray:
    """Uniform deviates on ``[-half_width, half_width)``."""
    return half_width * (2.0 * rng.random(size) - 1.0)


def derive_seed(base_seed: int, *indices: int) -> int:
    """Mix a base seed and integer indices into an independent 64-bit seed.

    Uses numpy's ``SeedSequence`` hashing, which is documented and stable,
    so any single trial of an experiment grid can be re-run in isolation.
    """
    entropy = [int(base_seed) & MASK64] + [int(i) & MASK64 for i in indices]
    state = np.random.SeedSequence(entropy).generate_state(1, np.uint64)
    return int(state[0])
