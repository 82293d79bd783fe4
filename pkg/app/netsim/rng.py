# Copyright (c) 2024. All rights reserved.
"""Counter-based random substreams.

Every random draw the simulator makes is addressed by (seed, entity, counters),
for example (seed, LINKS, absolute_tick). The draws therefore do not depend on
how many numbers other entities consumed, so two runs under different
policies see the same link flips, packets and flows.
"""

import numpy as np

# Entity keys
LINKS = 1
PACKETS = 2
FLOWS = 3
NOISE = 4


def substream(seed: int, entity: int, *counters: int) -> np.random.Generator:
    """Independent generator for one (seed, entity, counters) address."""
    key = (entity, *(int(c) for c in counters))
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=key)))
