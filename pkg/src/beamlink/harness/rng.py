"""Counter-keyed random streams.

Every random draw in a run comes from a generator keyed by (master seed,
purpose, trial, block, extra). Streams are independent of execution
order, so trials can be sharded or re-run in isolation and reproduce the
exact same draws, and adding a consumer (a new scheme, a new metric)
never perturbs anyone else's randomness.
"""

from __future__ import annotations

import numpy as np

# Stable purpose codes; the numeric value is part of the reproducibility
# contract, append-only.
CLUSTERS = 0
STAT_FADING = 1
STAT_UL_NOISE = 2
STAT_DL_NOISE = 3
WINDOW_FADING = 4
WINDOW_UL_NOISE = 5
WINDOW_DL_NOISE = 6


def stream(master_seed: int, purpose: int, trial: int = 0, block: int = 0,
           extra: int = 0) -> np.random.Generator:
    """Deterministic generator for one (purpose, trial, block, extra) cell."""
    seq = np.random.SeedSequence(entropy=(int(master_seed), purpose, trial, block, extra))
    return np.random.Generator(np.random.PCG64(seq))


def complex_normal(rng: np.random.Generator, shape: tuple[int, ...]) -> np.ndarray:
    """Unit-variance circularly symmetric complex Gaussian draws."""
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)
