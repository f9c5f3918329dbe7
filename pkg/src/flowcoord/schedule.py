"""Turn routes and optimal flows into per-vehicle departure and crossing times.

Vehicles sharing a departure edge leave at a uniform period of one over
the optimal flow on that edge, in the order of their per-route ideal
timings. Crossing exit times then follow the max rule: the flow-implied
arrival at the exit node, or the preceding exit onto the same edge plus
the flow headway, whichever is later.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field

from .assignment import CommodityFlowSolution
from .network import INTERSECTION, RoadNetwork, bpr_latency
from .recovery import RouteSet

GRID_EPS = 1e-9  # tolerance when counting periods that fit in the horizon


@dataclass
class Crossing:
    """One pass through an intersection: entry road, exit road and times."""

    intersection: int
    entry_edge: int
    exit_edge: int
    entry_time: float | None = None
    exit_time: float | None = None


@dataclass
class VehicleSchedule:
    vehicle_id: int
    demand_id: int
    route_index: int
    departure_time: float
    crossings: list[Crossing] = field(default_factory=list)


@dataclass(frozen=True)
class ScheduleBuild:
    vehicles: list[VehicleSchedule]
    skipped_routes: tuple[tuple[int, int], ...]  # (demand id, route index) with no departure


def _route_crossings(network: RoadNetwork, edges: tuple[int, ...]) -> list[Crossing]:
    """Split a route into (entry edge, intersection, exit edge) triples.

    Requires the depot-intersection-depot alternation of the grid topology,
    so every crossing spans exactly two consecutive route edges.
    """
    if len(edges) % 2 != 0:
        raise ValueError("route does not alternate depot/intersection/depot")
    crossings = []
    for i in range(0, len(edges), 2):
        entry, exit_ = edges[i], edges[i + 1]
        mid = network.edges[entry].head
        if network.nodes[mid].kind != INTERSECTION or network.edges[exit_].tail != mid:
            raise ValueError(f"route edges {entry},{exit_} do not meet at an intersection")
        crossings.append(Crossing(intersection=mid, entry_edge=entry, exit_edge=exit_))
    return crossings


def build_departure_schedule(
    network: RoadNetwork,
    route_set: RouteSet,
    solution: CommodityFlowSolution,
    horizon: float,
) -> ScheduleBuild:
    """Materialize vehicles departing over ``[0, horizon]``.

    Per departure edge: each route contributes ideal timestamps k/flow for
    k = 0..floor(flow*horizon); the merged sequence (ties by demand then
    route index) is retimed onto the uniform grid j/x_e of the edge's
    optimal flow, preserving order. Routes whose period exceeds the
    horizon contribute no vehicles and are reported in ``skipped_routes``.
    """
    if horizon <= 0:
        raise ValueError("horizon must be positive")
    by_edge: dict[int, list] = {}
    skipped: list[tuple[int, int]] = []
    for route in route_set.routes:
        first = route.edges[0]
        count = math.floor(route.flow * horizon + GRID_EPS) + 1
        if horizon < 1.0 / route.flow - GRID_EPS:
            skipped.append((route.demand_id, route.index))
            continue
        ideal = [(k / route.flow, route.demand_id, route.index, route) for k in range(count)]
        by_edge.setdefault(first, []).extend(ideal)

    records = []  # (departure time, edge index, slot, route)
    for edge_idx in sorted(by_edge):
        merged = sorted(by_edge[edge_idx], key=lambda r: (r[0], r[1], r[2]))
        rate = float(solution.aggregate_flow[edge_idx])
        if rate <= 0:
            raise ValueError(f"departure edge {edge_idx} has no optimal flow")
        for slot, (_, _, _, route) in enumerate(merged):
            records.append((slot / rate, edge_idx, slot, route))

    records.sort(key=lambda r: (r[0], r[1], r[2]))
    vehicles = []
    for vid, (depart, _, _, route) in enumerate(records):
        vehicles.append(
            VehicleSchedule(
                vehicle_id=vid,
                demand_id=route.demand_id,
                route_index=route.index,
                departure_time=depart,
                crossings=_route_crossings(network, route.edges),
            )
        )
    return ScheduleBuild(vehicles=vehicles, skipped_routes=tuple(skipped))


def propagate_exit_times(
    vehicles: list[VehicleSchedule],
    network: RoadNetwork,
    solution: CommodityFlowSolution,
) -> list[VehicleSchedule]:
    """Fill entry/exit times of every crossing, in global entry-time order.

    The exit time at one intersection is the entry time at the next. The
    predecessor for the headway branch of the max rule is tracked per exit
    edge, matching the flow rate used in the headway term.
    """
    flows = solution.aggregate_flow
    last_exit: dict[int, float] = {}
    heap: list[tuple[float, int, int]] = []
    for vehicle in vehicles:
        if vehicle.crossings:
            heapq.heappush(heap, (vehicle.departure_time, vehicle.vehicle_id, 0))
    by_id = {v.vehicle_id: v for v in vehicles}

    while heap:
        entry_time, vid, idx = heapq.heappop(heap)
        vehicle = by_id[vid]
        crossing = vehicle.crossings[idx]
        entry_edge = network.edges[crossing.entry_edge]
        exit_edge = network.edges[crossing.exit_edge]
        x_in = float(flows[crossing.entry_edge])
        x_out = float(flows[crossing.exit_edge])
        if x_out <= 0:
            raise ValueError(f"no optimal flow on exit edge {crossing.exit_edge}")
        free_arrival = entry_time + bpr_latency(
            entry_edge, x_in, network.bpr_alpha, network.bpr_beta
        ) + bpr_latency(exit_edge, x_out, network.bpr_alpha, network.bpr_beta)
        previous = last_exit.get(crossing.exit_edge)
        exit_time = free_arrival if previous is None else max(free_arrival, previous + 1.0 / x_out)
        crossing.entry_time = entry_time
        crossing.exit_time = exit_time
        last_exit[crossing.exit_edge] = exit_time
        if idx + 1 < len(vehicle.crossings):
            heapq.heappush(heap, (exit_time, vid, idx + 1))
    return vehicles
