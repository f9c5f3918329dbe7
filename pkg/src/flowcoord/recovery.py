"""Decompose per-demand optimal edge flows into explicit routes.

Repeatedly walks connected positive flow from the origin to the
destination, preferring the straightest continuation at every node. Each
walk carries the running minimum of the residual edge flows it touches and
is subtracted from the residual on completion, so at least one edge is
zeroed per recovered route.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .assignment import CommodityFlowSolution
from .network import Demand, RoadNetwork

RESIDUAL_EPS = 1e-7  # veh/s below which solver residue counts as zero


@dataclass(frozen=True)
class Route:
    """One origin-destination route carrying a share of a demand's rate."""

    demand_id: int
    index: int
    edges: tuple[int, ...]
    flow: float

    def nodes(self, network: RoadNetwork) -> list[int]:
        first = network.edges[self.edges[0]].tail
        return [first] + [network.edges[e].head for e in self.edges]


@dataclass(frozen=True)
class RouteSet:
    routes: tuple[Route, ...]

    def for_demand(self, demand_id: int) -> list[Route]:
        return [r for r in self.routes if r.demand_id == demand_id]


class DecompositionError(RuntimeError):
    """Residual flow cannot be walked to the destination."""


def turn_angle(incoming: tuple[float, float], outgoing: tuple[float, float]) -> float:
    """Signed turn angle in radians; 0 straight, negative right, positive left."""
    cross = incoming[0] * outgoing[1] - incoming[1] * outgoing[0]
    dot = incoming[0] * outgoing[0] + incoming[1] * outgoing[1]
    return math.atan2(cross, dot)


def straight_priority(
    network: RoadNetwork, incoming_edge: int | None, candidate_edges: list[int]
) -> list[int]:
    """Order candidate outgoing edges: straight first, then right, then left.

    The angle is computed from node coordinates. Exact U-turns sort last.
    With no incoming edge (walk start) or missing coordinates the order
    falls back to edge index, with a warning in the latter case.
    """
    if incoming_edge is None or len(candidate_edges) <= 1:
        return sorted(candidate_edges)

    edge_in = network.edges[incoming_edge]
    positions = [network.node_position(n) for n in (edge_in.tail, edge_in.head)]
    heads = [network.node_position(network.edges[e].head) for e in candidate_edges]
    if any(p is None for p in positions + heads):
        warnings.warn(
            "node coordinates missing; straight-priority falls back to edge-index order",
            stacklevel=2,
        )
        return sorted(candidate_edges)

    (tx, ty), (hx, hy) = positions
    direction_in = (hx - tx, hy - ty)

    def key(eidx: int) -> tuple[float, int, int]:
        nx, ny = network.node_position(network.edges[eidx].head)
        angle = turn_angle(direction_in, (nx - hx, ny - hy))
        # round so that symmetric left/right pairs compare equal, then
        # prefer right (negative angle) over left
        return (round(abs(angle), 9), 0 if angle < -1e-12 else 1, eidx)

    return sorted(candidate_edges, key=key)


def recover_routes(
    network: RoadNetwork,
    solution: CommodityFlowSolution,
    demands: list[Demand],
    residual_eps: float = RESIDUAL_EPS,
) -> RouteSet:
    """Recover every demand's routes from its per-commodity edge flows.

    Raises :class:`DecompositionError` if a walk gets stuck before the
    destination or revisits a node (cyclic residual flow); both indicate
    conservation violated beyond tolerance.
    """
    routes: list[Route] = []
    for demand in demands:
        residual = solution.flow_for_demand(demand.id).astype(float).copy()
        index = 0
        while True:
            start_candidates = [
                e for e in network.outgoing.get(demand.origin, ()) if residual[e] > residual_eps
            ]
            if not start_candidates:
                break
            index += 1
            edges: list[int] = []
            visited = {demand.origin}
            node = demand.origin
            incoming: int | None = None
            flow = demand.rate
            while node != demand.destination:
                candidates = [
                    e for e in network.outgoing.get(node, ()) if residual[e] > residual_eps
                ]
                if not candidates:
                    raise DecompositionError(
                        f"demand {demand.id}: no residual flow out of node {node}"
                    )
                chosen = straight_priority(network, incoming, candidates)[0]
                flow = min(flow, float(residual[chosen]))
                edges.append(chosen)
                node = network.edges[chosen].head
                if node in visited:
                    raise DecompositionError(
                        f"demand {demand.id}: cyclic residual flow at node {node}"
                    )
                visited.add(node)
                incoming = chosen
            for e in edges:
                residual[e] -= flow
            routes.append(Route(demand.id, index, tuple(edges), flow))
    return RouteSet(tuple(routes))


def reaggregate(network: RoadNetwork, route_set: RouteSet, demand_id: int) -> np.ndarray:
    """Sum route flows back onto edges; inverse check for recover_routes."""
    flows = np.zeros(network.num_edges)
    for route in route_set.for_demand(demand_id):
        for e in route.edges:
            flows[e] += route.flow
    return flows
