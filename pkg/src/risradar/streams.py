"""Keyed random streams.

Every stochastic component gets its own generator derived from the master
seed and a structural key (trial, stage, sector, ...) so that results do
not depend on which sectors a scan happens to visit, and Monte Carlo trials
can run concurrently without sharing generator state.
"""

from __future__ import annotations

import numpy as np

# Key tags (second element after the trial index).
RCS = 0
CALIBRATION = 1
TRANSMISSION = 2
REFINEMENT = 3


def substream(master_seed: int, *key: int) -> np.random.Generator:
    """Deterministic generator for (master_seed, *key)."""
    return np.random.default_rng(np.random.SeedSequence([int(master_seed), *map(int, key)]))
