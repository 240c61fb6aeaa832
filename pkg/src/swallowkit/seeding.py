"""Deterministic random-stream derivation.

All randomness in the library flows from one integer seed. Subtasks (a tree
in a forest, an iteration of an evaluation, a file in a corpus) get their
own generator derived from (seed, *path), a pure function of its arguments.
Streams for distinct paths are independent, so work scheduled serially or
in parallel produces identical results.
"""

from __future__ import annotations

import numpy as np


def _seed_sequence(seed: int, *path: int) -> np.random.SeedSequence:
    entropy = [int(seed), *(int(p) for p in path)]
    if any(e < 0 for e in entropy):
        raise ValueError("seed components must be non-negative integers")
    return np.random.SeedSequence(entropy)


def derive_rng(seed: int, *path: int) -> np.random.Generator:
    """Generator for the subtask addressed by (seed, *path)."""
    return np.random.default_rng(_seed_sequence(seed, *path))


def derive_seed(seed: int, *path: int) -> int:
    """Integer seed for the subtask addressed by (seed, *path)."""
    return int(_seed_sequence(seed, *path).generate_state(1, np.uint64)[0])
