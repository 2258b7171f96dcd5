"""Deterministic random streams.

Every random quantity of one replication is drawn from a child of
``SeedSequence(root_seed, spawn_key=(rep_index,))``. The children are spawned
in the fixed order of :data:`STREAM_NAMES`, so the stream used for, e.g., the
tie-breaking keys never depends on how many draws another stream consumed and
replications can run in any order.
"""

import numpy as np

STREAM_NAMES = ("graph", "omega", "calibration", "tiebreak", "scorer")


def replication_seed(root_seed: int, rep_index: int) -> np.random.SeedSequence:
    if root_seed < 0 or rep_index < 0:
        raise ValueError("seeds and replication indices must be non-negative")
    return np.random.SeedSequence(root_seed, spawn_key=(rep_index,))


def replication_streams(root_seed: int, rep_index: int = 0) -> dict:
    """Named generators for replication ``rep_index`` under ``root_seed``."""
    children = replication_seed(root_seed, rep_index).spawn(len(STREAM_NAMES))
    return {name: np.random.default_rng(child) for name, child in zip(STREAM_NAMES, children)}
