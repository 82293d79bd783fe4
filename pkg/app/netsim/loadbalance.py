# Copyright (c) 2024. All rights reserved.
"""Two-server load balancing with delayed load information.

Controller k runs switch k and server k. Each tick a flow arrives at switch
k with probability ``arrival_rates[k]``. Both controllers then decide
simultaneously, from loads as of the start of the tick, whether to send the
flow to their own server or the other one, picking whichever they believe
is less loaded; ties stay local. A controller always knows its own server's
load; its view of the other server is refreshed by sync messages. Loads are
the work each server received in the current slot, and performance is minus
the RMSE of the two slot throughputs around their mean.
"""

import logging
from dataclasses import dataclass, replace
from typing import Literal

import numpy as np

from app.errors import InvalidArgumentError
from app.netsim.rng import FLOWS, substream
from app.netsim.state import SlotResult, WorldState, check_slot_args, sync_events
from app.syncmodel import SyncPolicy

logger = logging.getLogger("syncrate.netsim")


def throughput_rmse(throughputs: np.ndarray) -> float:
    """Root-mean-square deviation of server throughputs from their mean."""
    return float(np.sqrt(np.mean((throughputs - throughputs.mean()) ** 2)))


@dataclass(frozen=True)
class LoadBalanceScenario:
    """Flows queued at either of two servers.

    ``swap_labels`` exchanges which random stream feeds which switch, so a
    scenario with mirrored rates and a mirrored policy replays the same
    system with controller labels swapped.
    """
    arrival_rates: tuple[float, float] = (0.8, 0.4)
    slot_seconds: int = 60
    work: Literal["constant", "uniform"] = "constant"
    work_low: float = 0.5
    work_high: float = 1.5
    rng_seed: int = 0
    swap_labels: bool = False

    def __post_init__(self) -> None:
        rates = tuple(float(r) for r in self.arrival_rates)
        if len(rates) != 2:
            raise InvalidArgumentError("load balancing needs exactly two arrival rates")
        if any(not 0.0 < r <= 1.0 for r in rates):
            raise InvalidArgumentError(f"arrival rates must lie in (0, 1] flows per tick, got {rates}")
        object.__setattr__(self, "arrival_rates", rates)
        if self.slot_seconds < 1:
            raise InvalidArgumentError("slot_seconds must be a positive number of ticks")
        if self.work not in ("constant", "uniform"):
            raise InvalidArgumentError(f"unknown work distribution: {self.work}")
        if self.work == "uniform" and not 0.0 < self.work_low <= self.work_high:
            raise InvalidArgumentError("uniform work needs 0 < work_low <= work_high")
        if self.rng_seed < 0:
            raise InvalidArgumentError("rng_seed must be non-negative")

    @property
    def controller_count(self) -> int:
        return 2

    def with_seed(self, seed: int) -> "LoadBalanceScenario":
        return replace(self, rng_seed=seed)

    def initial_state(self) -> WorldState:
        return WorldState(link_up=np.zeros(0, dtype=bool), server_loads=np.zeros(2))

    def advance_idle(self, state: WorldState, slot: int) -> WorldState:
        """Loads restart every slot, so skipping a slot only moves the clock."""
        return WorldState(state.link_up.copy(), np.zeros(2), slot * self.slot_seconds)

    def _arrival(self, switch: int, abs_tick: int) -> float:
        """Work arriving at ``switch`` this tick (0 when no flow arrives)."""
        stream = 1 - switch if self.swap_labels else switch
        rng = substream(self.rng_seed, FLOWS, abs_tick, stream)
        u = rng.random()
        amount = rng.uniform(self.work_low, self.work_high) if self.work == "uniform" else 1.0
        return amount if u < self.arrival_rates[switch] else 0.0

    def run_slot(self, state: WorldState, policy: SyncPolicy, slot: int) -> SlotResult:
        """Simulate slot ``slot`` (1-based) under ``policy``."""
        check_slot_args(2, policy, slot)
        events = sync_events(policy, self.slot_seconds)
        loads = np.zeros(2)
        # views[j, i]: controller j's belief about server i
        views = np.zeros((2, 2))
        flows = 0
        base = (slot - 1) * self.slot_seconds

        for tick in range(self.slot_seconds):
            abs_tick = base + tick
            arrivals = [self._arrival(k, abs_tick) for k in (0, 1)]
            for i, j in events[tick]:
                views[j, i] = loads[i]
            for j in (0, 1):
                views[j, j] = loads[j]
            added = np.zeros(2)
            for k, amount in enumerate(arrivals):
                if amount <= 0.0:
                    continue
                flows += 1
                other = 1 - k
                target = k if views[k, k] <= views[k, other] else other
                added[target] += amount
            loads += added

        rmse = throughput_rmse(loads)
        logger.debug(f"Load-balance slot {slot}: throughputs={loads.tolist()}, rmse={rmse:.4f}")
        new_state = WorldState(state.link_up.copy(), loads.copy(), slot * self.slot_seconds)
        components = {"throughput_0": float(loads[0]), "throughput_1": float(loads[1]), "flows": float(flows)}
        return SlotResult(psi=-rmse, components=components, state=new_state)
