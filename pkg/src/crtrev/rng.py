"""Counter-based random streams.

Every replicate gets its own Philox stream keyed by ``(seed, lane, index)``,
so a replicate's draws do not depend on how many workers run the batch or in
which order replicates are evaluated.
"""

from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1

# lanes separate independent batches drawn from one user seed
LANE_MAIN = 0
LANE_A = 1
LANE_B = 2
LANE_WALK = 3


def stream(seed: int, index: int = 0, lane: int = LANE_MAIN) -> np.random.Generator:
    """Return the generator for replicate ``index`` of ``lane`` under ``seed``."""
    if index < 0 or index >= 1 << 48:
        raise ValueError(f"replicate index out of range: {index}")
    if lane < 0 or lane >= 1 << 16:
        raise ValueError(f"lane out of range: {lane}")
    key = ((int(seed) & _MASK64) << 64) | (lane << 48) | index
    return np.random.Generator(np.random.Philox(key=key))
