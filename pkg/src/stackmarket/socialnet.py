"""Directed similarity graphs over agents' service sets."""

from __future__ import annotations

from fractions import Fraction
from typing import Hashable, Iterable

DEFAULT_NODE_CAP = 2000


def edge_weight(from_services: Iterable, to_services: Iterable) -> Fraction:
    """|from ∩ to| / |to|: how much of the target's services the source shares."""
    a, b = set(from_services), set(to_services)
    if not b:
        raise ZeroDivisionError("edge weight undefined for an empty target service set")
    return Fraction(len(a & b), len(b))


def alg3_similarity(i_services: Iterable, j_services: Iterable) -> Fraction:
    """|i ∩ j| / |i|, normalized by the seed company used in greedy team formation."""
    a, b = set(i_services), set(j_services)
    if not a:
        raise ZeroDivisionError("similarity undefined for an empty seed service set")
    return Fraction(len(a & b), len(a))


class SimilarityGraph:
    """Complete weighted digraph; weights are cached up to ``node_cap`` agents.

    Above the cap the matrix is not materialized and each query recomputes
    the weight from the stored service sets.
    """

    def __init__(self, agents: Iterable[tuple[Hashable, Iterable]], node_cap: int = DEFAULT_NODE_CAP):
        self.services = {}
        for aid, services in agents:
            services = frozenset(services)
            if not services:
                raise ZeroDivisionError(f"agent {aid!r} has an empty service set")
            self.services[aid] = services
        self.nodes = list(self.services)
        self._cache = None
        if len(self.nodes) <= node_cap:
            self._cache = {
                (u, v): edge_weight(self.services[u], self.services[v]) for u in self.nodes for v in self.nodes
            }

    @property
    def materialized(self) -> bool:
        return self._cache is not None

    def weight(self, u, v) -> Fraction:
        if self._cache is not None:
            return self._cache[(u, v)]
        return edge_weight(self.services[u], self.services[v])

    def edges_at_least(self, threshold) -> list[tuple]:
        """Ordered pairs (u, v), u != v, whose weight is >= ``threshold``."""
        return [(u, v) for u in self.nodes for v in self.nodes if u != v and self.weight(u, v) >= threshold]

    def edges_at_most(self, threshold) -> list[tuple]:
        return [(u, v) for u in self.nodes for v in self.nodes if u != v and self.weight(u, v) <= threshold]

    def __len__(self):
        return len(self.nodes)


def build_graph(agents: Iterable[tuple[Hashable, Iterable]], node_cap: int = DEFAULT_NODE_CAP) -> SimilarityGraph:
    return SimilarityGraph(agents, node_cap=node_cap)
