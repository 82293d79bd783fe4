# Copyright (c) 2024. All rights reserved.
"""Slotted routing scenario with stale inter-domain link views.

Each tick: links flip state independently with ``flip_prob``; scheduled
sync messages refresh remote views; then ``packets_per_tick`` packets with
random endpoints are routed by the source's controller on a hop-count
shortest path over its composite view (own links live, remote links as of
their last sync). A packet is delivered when every link of that path is up
in the ground truth at that tick; it is optimally routed when it is also as
short as the true shortest path.
"""

import heapq
import logging
import math
from dataclasses import dataclass, replace
from typing import Callable, Literal

import numpy as np

from app.errors import InvalidArgumentError
from app.netsim.rng import LINKS, PACKETS, substream
from app.netsim.state import SlotResult, WorldState, check_slot_args, sync_events
from app.netsim.topology import Topology
from app.syncmodel import SyncPolicy

logger = logging.getLogger("syncrate.netsim")

# Called after syncs and before packets: (tick, truth, views, last_sync)
TickHook = Callable[[int, np.ndarray, np.ndarray, np.ndarray], None]


@dataclass(frozen=True)
class PacketOutcome:
    """Result of routing one packet."""
    delivered: bool
    optimal: bool
    hops: int | None


def shortest_path_tree(
    adjacency: tuple[tuple[tuple[int, int], ...], ...],
    up: np.ndarray,
    source: int,
) -> tuple[list[float], list[tuple[int, int] | None]]:
    """Hop-count Dijkstra over links marked up.

    Returns distances and, per node, the (predecessor, link) it was reached
    by. Equal-distance nodes settle in ascending index order, so ties go to
    the lowest-index predecessor.
    """
    n = len(adjacency)
    dist = [math.inf] * n
    pred: list[tuple[int, int] | None] = [None] * n
    dist[source] = 0
    heap = [(0, source)]
    while heap:
        d, u = heapq.heappop(heap)
        if d > dist[u]:
            continue
        for v, link in adjacency[u]:
            if not up[link]:
                continue
            nd = d + 1
            if nd < dist[v]:
                dist[v] = nd
                pred[v] = (u, link)
                heapq.heappush(heap, (nd, v))
    return dist, pred


def path_links(pred: list[tuple[int, int] | None], source: int, target: int) -> list[int] | None:
    """Link indices from source to target, or None when unreachable."""
    if source == target:
        return []
    links = []
    node = target
    while node != source:
        step = pred[node]
        if step is None:
            return None
        node, link = step
        links.append(link)
    links.reverse()
    return links


def route_packet(
    topology: Topology,
    view_up: np.ndarray,
    truth_up: np.ndarray,
    source: int,
    target: int,
) -> PacketOutcome:
    """Route one packet on ``view_up`` and judge it against ``truth_up``."""
    _, pred = shortest_path_tree(topology.adjacency, view_up, source)
    path = path_links(pred, source, target)
    if path is None or not all(truth_up[link] for link in path):
        return PacketOutcome(False, False, None)
    true_dist, _ = shortest_path_tree(topology.adjacency, truth_up, source)
    return PacketOutcome(True, len(path) == true_dist[target], len(path))


@dataclass(frozen=True)
class RoutingScenario:
    """Packet routing across controller domains under link churn."""
    topology: Topology
    flip_prob: float = 0.05
    packets_per_tick: int = 8
    slot_seconds: int = 32
    metric: Literal["delivered", "optimal"] = "delivered"
    rng_seed: int = 0

    def __post_init__(self) -> None:
        if not 0.0 <= self.flip_prob <= 1.0:
            raise InvalidArgumentError(f"flip_prob must lie in [0, 1], got {self.flip_prob}")
        if self.packets_per_tick < 1:
            raise InvalidArgumentError("packets_per_tick must be positive")
        if self.slot_seconds < 1:
            raise InvalidArgumentError("slot_seconds must be a positive number of ticks")
        if self.metric not in ("delivered", "optimal"):
            raise InvalidArgumentError(f"unknown routing metric: {self.metric}")
        if self.rng_seed < 0:
            raise InvalidArgumentError("rng_seed must be non-negative")

    @property
    def controller_count(self) -> int:
        return self.topology.controller_count

    def with_seed(self, seed: int) -> "RoutingScenario":
        return replace(self, rng_seed=seed)

    def initial_state(self) -> WorldState:
        return WorldState(link_up=np.ones(self.topology.link_count, dtype=bool))

    def _flip(self, link_up: np.ndarray, abs_tick: int) -> None:
        if self.flip_prob > 0.0:
            flips = substream(self.rng_seed, LINKS, abs_tick).random(link_up.size) < self.flip_prob
            link_up ^= flips

    def advance_idle(self, state: WorldState, slot: int) -> WorldState:
        """Apply one slot of link dynamics without traffic."""
        link_up = state.link_up.copy()
        base = (slot - 1) * self.slot_seconds
        for tick in range(self.slot_seconds):
            self._flip(link_up, base + tick)
        return WorldState(link_up, state.server_loads.copy(), slot * self.slot_seconds)

    def run_slot(
        self,
        state: WorldState,
        policy: SyncPolicy,
        slot: int,
        tick_hook: TickHook | None = None,
    ) -> SlotResult:
        """Simulate slot ``slot`` (1-based) under ``policy``."""
        check_slot_args(self.controller_count, policy, slot)
        topo = self.topology
        c = topo.controller_count
        n = topo.node_count
        owned = [np.asarray(links, dtype=int) for links in topo.owned_links]
        events = sync_events(policy, self.slot_seconds)

        link_up = state.link_up.copy()
        views = np.ones((c, topo.link_count), dtype=bool)
        last_sync = np.zeros((c, c), dtype=int)
        delivered = optimal = total = 0
        base = (slot - 1) * self.slot_seconds

        for tick in range(self.slot_seconds):
            abs_tick = base + tick
            self._flip(link_up, abs_tick)
            for i, j in events[tick]:
                views[j, owned[i]] = link_up[owned[i]]
                last_sync[i, j] = tick
            for j in range(c):
                views[j, owned[j]] = link_up[owned[j]]
            if tick_hook is not None:
                tick_hook(tick, link_up.copy(), views.copy(), last_sync.copy())

            rng = substream(self.rng_seed, PACKETS, abs_tick)
            sources = rng.integers(0, n, size=self.packets_per_tick)
            targets = (sources + rng.integers(1, n, size=self.packets_per_tick)) % n

            view_trees: dict[int, list] = {}
            true_dists: dict[int, list[float]] = {}
            for src, dst in zip(sources.tolist(), targets.tolist()):
                acting = topo.domain_of[src]
                if src not in view_trees:
                    view_trees[src] = shortest_path_tree(topo.adjacency, views[acting], src)[1]
                path = path_links(view_trees[src], src, dst)
                total += 1
                if path is None or not all(link_up[link] for link in path):
                    continue
                delivered += 1
                if src not in true_dists:
                    true_dists[src] = shortest_path_tree(topo.adjacency, link_up, src)[0]
                if len(path) == true_dists[src][dst]:
                    optimal += 1

        psi = (delivered if self.metric == "delivered" else optimal) / total
        logger.debug(
            f"Routing slot {slot}: delivered={delivered}/{total}, optimal={optimal}, psi={psi:.4f}"
        )
        new_state = WorldState(link_up, state.server_loads.copy(), slot * self.slot_seconds)
        components = {"packets": float(total), "delivered": float(delivered), "optimal": float(optimal)}
        return SlotResult(psi=psi, components=components, state=new_state)
