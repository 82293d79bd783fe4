# Copyright (c) 2024. All rights reserved.
"""World state, slot results and the synchronization schedule shared by both scenarios."""

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Protocol

import numpy as np

from app.errors import InvalidArgumentError
from app.syncmodel import Pair, SyncPolicy


@dataclass
class WorldState:
    """Ground truth carried from slot to slot.

    ``tick`` counts absolute ticks elapsed since the start of slot 1.
    """
    link_up: np.ndarray
    server_loads: np.ndarray = field(default_factory=lambda: np.zeros(0))
    tick: int = 0

    def copy(self) -> "WorldState":
        return WorldState(self.link_up.copy(), self.server_loads.copy(), self.tick)


@dataclass(frozen=True)
class SlotResult:
    """Observed performance of one slot and the state after it."""
    psi: float
    components: dict[str, float]
    state: WorldState


class Scenario(Protocol):
    """What an oracle needs from a simulated application."""
    rng_seed: int
    slot_seconds: int

    @property
    def controller_count(self) -> int: ...

    def initial_state(self) -> WorldState: ...

    def run_slot(self, state: WorldState, policy: SyncPolicy, slot: int) -> SlotResult: ...

    def advance_idle(self, state: WorldState, slot: int) -> WorldState: ...

    def with_seed(self, seed: int) -> "Scenario": ...


@lru_cache(maxsize=1024)
def sync_ticks(slot_seconds: int, rate: int) -> tuple[int, ...]:
    """Ticks of a slot at which a pair at ``rate`` delivers a sync message.

    The mandatory message arrives at tick 0; the m-th extra one at
    ceil(s * m / (rate + 1)), clipped to the last tick of the slot.
    """
    if slot_seconds < 1:
        raise InvalidArgumentError(f"slot length must be a positive number of ticks, got {slot_seconds}")
    if rate < 0:
        raise InvalidArgumentError(f"rate must be non-negative, got {rate}")
    ticks = {0}
    for m in range(1, rate + 1):
        ticks.add(min(slot_seconds - 1, math.ceil(slot_seconds * m / (rate + 1))))
    return tuple(sorted(ticks))


def sync_events(policy: SyncPolicy, slot_seconds: int) -> list[list[Pair]]:
    """Pairs (i, j) whose message refreshes j's view of i, listed per tick."""
    events: list[list[Pair]] = [[] for _ in range(slot_seconds)]
    for pair, rate in zip(policy.pairs, policy.rates):
        for tick in sync_ticks(slot_seconds, rate):
            events[tick].append(pair)
    return events


def check_slot_args(controller_count: int, policy: SyncPolicy, slot: int) -> None:
    if slot < 1:
        raise InvalidArgumentError(f"slots are numbered from 1, got {slot}")
    if policy.controller_count != controller_count:
        raise InvalidArgumentError(
            f"policy covers {policy.controller_count} controllers, scenario has {controller_count}"
        )
