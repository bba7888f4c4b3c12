"""Seed derivation and categorical sampling.

Per-agent generators are derived from the master seed with a counter-based
mix, so an agent's stream does not depend on how many other agents ran first.
"""

from __future__ import annotations

import bisect
import itertools
import math
from typing import Sequence

import numpy as np

MASK64 = (1 << 64) - 1
GOLDEN_GAMMA = 0x9E3779B97F4A7C15

STREAM_SIMULATION = 1
STREAM_PERSONA = 2


def splitmix64(x: int) -> int:
    x = (x + GOLDEN_GAMMA) & MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & MASK64
    return x ^ (x >> 31)


def derive_seed(master: int, index: int, stream: int = STREAM_SIMULATION) -> int:
    """64-bit seed for substream ``index`` of ``stream`` under ``master``."""
    x = splitmix64((master & MASK64) ^ splitmix64(stream))
    return splitmix64((x + (index + 1) * GOLDEN_GAMMA) & MASK64)


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed & MASK64))


def sample_categorical(probabilities: Sequence[float], rng: np.random.Generator) -> int:
    """Inverse-CDF draw of an index; zero-mass entries are never returned."""
    # plain floats: cheaper than numpy for the short vectors seen per selection,
    # and accumulate sums left to right exactly like np.cumsum
    p = [float(x) for x in probabilities]
    if not p:
        raise ValueError("probabilities must be a nonempty 1-d sequence")
    if min(p) < 0 or not math.isfinite(math.fsum(p)):
        raise ValueError("probabilities must be finite and nonnegative")
    cdf = list(itertools.accumulate(p))
    if not cdf[-1] > 0:
        raise ValueError("probabilities sum to zero")
    u = rng.random() * cdf[-1]
    idx = min(bisect.bisect_right(cdf, u), len(p) - 1)
    while p[idx] == 0:
        idx -= 1
    return idx
