"""Named RNG substreams derived from one master seed.

Each consumer of randomness (parameter init, dropout masks, batch shuffling,
data synthesis) draws from its own child generator, so adding draws to one
consumer never perturbs the others.
"""

from __future__ import annotations

import numpy as np

SUBSTREAMS = {"init": 0, "dropout": 1, "shuffle": 2, "synth": 3}


def substream(seed: int, name: str) -> np.random.Generator:
    return np.random.default_rng([seed, SUBSTREAMS[name]])
