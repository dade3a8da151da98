"""
Seeded randomness for protocol runs.

Every role draws from its own generator, spawned from one session seed so
that runs are reproducible without parties sharing a stream.
"""

from typing import Dict, Optional, Sequence, Union

import numpy as np

SeedLike = Union[None, int, np.random.Generator]


def session_seed(source: SeedLike) -> Optional[int]:
    """An integer seed from an int, a generator (one draw), or None."""
    if isinstance(source, np.random.Generator):
        return int(source.integers(0, 2**63))
    return source


def spawn_rngs(source: SeedLike, roles: Sequence[str]) -> Dict[str, np.random.Generator]:
    """One independent generator per role."""
    children = np.random.SeedSequence(session_seed(source)).spawn(len(roles))
    return {role: np.random.default_rng(child) for role, child in zip(roles, children)}
