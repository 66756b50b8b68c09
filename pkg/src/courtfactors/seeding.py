"""Deterministic seed derivation.

Every stage that needs randomness derives its own seed from a single base
seed plus integer context keys (rank being fitted, restart index, stage id).
The scheme is `SeedSequence([base, *keys])`, so child streams never collide
and a run is reproducible from the one seed recorded in its manifest.
"""

from __future__ import annotations

import numpy as np


def derive_seed(base: int, *keys: int) -> int:
    """Return a child seed for the given context keys."""
    seq = np.random.SeedSequence([int(base), *[int(k) for k in keys]])
    return int(seq.generate_state(1, dtype=np.uint64)[0])
