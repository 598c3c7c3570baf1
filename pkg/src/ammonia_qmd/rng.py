"""Reproducible random streams for ensembles of trajectories.

Every trajectory draws from its own Philox stream keyed by
``(master_seed, trajectory_index)``, so results do not depend on how the
trajectories are scheduled across workers.
"""
from __future__ import annotations

import numpy as np

__all__ = ["stream", "check_seed"]

_SEED_MAX = 2**64 - 1


def check_seed(seed: int) -> int:
    seed = int(seed)
    if not 0 <= seed <= _SEED_MAX:
        raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
    return seed


def stream(seed: int, index: int = 0) -> np.random.Generator:
    """Counter-based generator for trajectory ``index`` of master ``seed``."""
    seq = np.random.SeedSequence(check_seed(seed), spawn_key=(int(index),))
    return np.random.Generator(np.random.Philox(seq))
