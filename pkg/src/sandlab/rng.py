"""Seed derivation for reproducible experiments.

Every run is keyed by a single 64-bit master seed.  Independent streams
(one per trial, per site, per bisection probe, ...) are derived from the
master seed plus a tuple of integer tags, so results never depend on the
order in which streams happen to be consumed.  Streams are backed by the
counter-based Philox generator.
"""

from __future__ import annotations

import numpy as np

MAX_SEED = 2**63 - 1


def stream(master_seed: int, *tags: int) -> np.random.Generator:
    """Return an independent Generator for (master_seed, *tags)."""
    ss = np.random.SeedSequence([int(master_seed), *[int(t) for t in tags]])
    return np.random.Generator(np.random.Philox(ss))


def derive_seed(master_seed: int, *tags: int) -> int:
    """Collapse (master_seed, *tags) to a single uint64 for kernels that
    seed their own internal generator."""
    ss = np.random.SeedSequence([int(master_seed), *[int(t) for t in tags]])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def spawn_seeds(master_seed: int, count: int, *tags: int) -> list[int]:
    """Per-trial kernel seeds: derive_seed(master, *tags, i) for i < count."""
    return [derive_seed(master_seed, *tags, i) for i in range(count)]
