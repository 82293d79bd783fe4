# Copyright (c) 2024. All rights reserved.
"""Multi-domain network topologies.

Nodes are partitioned into controller domains. A link inside a domain
belongs to that domain's controller; a boundary link belongs to the
lower-indexed of its two controllers.
"""

import logging
from dataclasses import dataclass
from functools import cached_property
from typing import Any

import networkx as nx

from app.errors import InvalidArgumentError

logger = logging.getLogger("syncrate.netsim")

Edge = tuple[int, int]


@dataclass(frozen=True)
class Topology:
    """Undirected graph with a controller domain per node.

    Edges are normalized to (u, v) with u < v and kept in sorted order; an
    edge's position in ``edges`` is its link index everywhere in the
    simulator.
    """
    node_count: int
    edges: tuple[Edge, ...]
    domain_of: tuple[int, ...]

    def __post_init__(self) -> None:
        if self.node_count < 2:
            raise InvalidArgumentError("a topology needs at least two nodes")
        normalized = sorted({(min(u, v), max(u, v)) for u, v in self.edges})
        for u, v in normalized:
            if u == v or not (0 <= u < self.node_count and 0 <= v < self.node_count):
                raise InvalidArgumentError(f"invalid edge ({u}, {v})")
        object.__setattr__(self, "edges", tuple(normalized))
        object.__setattr__(self, "domain_of", tuple(int(d) for d in self.domain_of))
        if len(self.domain_of) != self.node_count:
            raise InvalidArgumentError(
                f"domain_of has {len(self.domain_of)} entries for {self.node_count} nodes"
            )
        domains = set(self.domain_of)
        if domains != set(range(len(domains))):
            raise InvalidArgumentError(f"domains must be numbered 0..C-1, got {sorted(domains)}")
        if not nx.is_connected(self.to_networkx()):
            raise InvalidArgumentError("topology is not connected with all links up")

    @property
    def controller_count(self) -> int:
        return max(self.domain_of) + 1

    @property
    def link_count(self) -> int:
        return len(self.edges)

    @cached_property
    def domain_sizes(self) -> tuple[int, ...]:
        sizes = [0] * self.controller_count
        for d in self.domain_of:
            sizes[d] += 1
        return tuple(sizes)

    @cached_property
    def owners(self) -> tuple[int, ...]:
        """Controller owning each link."""
        return tuple(min(self.domain_of[u], self.domain_of[v]) for u, v in self.edges)

    @cached_property
    def owned_links(self) -> tuple[tuple[int, ...], ...]:
        """Link indices per owning controller."""
        per = [[] for _ in range(self.controller_count)]
        for idx, owner in enumerate(self.owners):
            per[owner].append(idx)
        return tuple(tuple(links) for links in per)

    @cached_property
    def adjacency(self) -> tuple[tuple[tuple[int, int], ...], ...]:
        """(neighbor, link index) per node, neighbors ascending."""
        adj: list[list[tuple[int, int]]] = [[] for _ in range(self.node_count)]
        for idx, (u, v) in enumerate(self.edges):
            adj[u].append((v, idx))
            adj[v].append((u, idx))
        return tuple(tuple(sorted(nbrs)) for nbrs in adj)

    def is_boundary(self, link: int) -> bool:
        u, v = self.edges[link]
        return self.domain_of[u] != self.domain_of[v]

    def to_networkx(self) -> nx.Graph:
        graph = nx.Graph()
        graph.add_nodes_from((n, {"domain": d}) for n, d in enumerate(self.domain_of))
        graph.add_edges_from(self.edges)
        return graph

    def to_dict(self) -> dict[str, Any]:
        return {
            "node_count": self.node_count,
            "edges": [list(e) for e in self.edges],
            "domain_of": list(self.domain_of),
        }


def contiguous_domains(node_count: int, controller_count: int) -> tuple[int, ...]:
    """Split nodes 0..N-1 into C consecutive blocks whose sizes differ by at most one."""
    if not 1 <= controller_count <= node_count:
        raise InvalidArgumentError(f"cannot split {node_count} nodes into {controller_count} domains")
    base, extra = divmod(node_count, controller_count)
    domain_of = []
    for d in range(controller_count):
        domain_of.extend([d] * (base + (1 if d < extra else 0)))
    return tuple(domain_of)


def generate_topology(
    node_count: int,
    controller_count: int,
    edge_prob: float,
    seed: int,
    max_attempts: int = 1000,
) -> Topology:
    """Seeded Erdos-Renyi graph, redrawn until connected, with contiguous domains."""
    if not 0.0 < edge_prob <= 1.0:
        raise InvalidArgumentError(f"edge_prob must lie in (0, 1], got {edge_prob}")
    domain_of = contiguous_domains(node_count, controller_count)
    for attempt in range(max_attempts):
        graph = nx.gnp_random_graph(node_count, edge_prob, seed=seed + attempt)
        if nx.is_connected(graph):
            logger.debug(
                f"Generated topology: N={node_count}, E={graph.number_of_edges()}, "
                f"attempt={attempt + 1}"
            )
            return Topology(node_count, tuple(graph.edges()), domain_of)
    raise InvalidArgumentError(
        f"no connected graph with N={node_count}, p={edge_prob} after {max_attempts} attempts"
    )
