"""Named, reproducible random streams derived from a single root seed.

Every source of randomness in an experiment (data generation, batch
sampling, parameter init, gallery trials) draws from its own named stream so
that components can be varied independently without perturbing the others.
Names are hashed with a stable digest; Python's salted ``hash`` would not
reproduce across processes.
"""

from __future__ import annotations

import hashlib

import numpy as np


def stream(root_seed: int, name: str) -> np.random.Generator:
    """Return the generator for stream `name` under `root_seed`."""
    digest = hashlib.blake2s(name.encode("utf-8"), digest_size=8).digest()
    tag = int.from_bytes(digest, "little")
    return np.random.default_rng(np.random.SeedSequence([int(root_seed) & (2**64 - 1), tag]))
