"""System-optimal multi-commodity flow via the conditional-gradient method.

Minimizes total travel time J(x) = sum_e t_e(x_e) * x_e over per-demand
edge flows subject to flow conservation and nonnegativity. Each iteration
solves one shortest-path problem per demand on the marginal edge costs
(the all-or-nothing direction), then takes an exact line-search step on
the 1-D convex restriction. The duality gap <grad J, x - x_aon> certifies
suboptimality.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass

import numpy as np

from .network import Demand, RoadNetwork, validate


@dataclass(frozen=True)
class SolverConfig:
    max_iterations: int = 5000
    gap_tolerance: float = 1e-4
    line_search_tolerance: float = 1e-12

    def __post_init__(self) -> None:
        if self.max_iterations <= 0 or self.gap_tolerance <= 0 or self.line_search_tolerance <= 0:
            raise ValueError("SolverConfig fields must be positive")


@dataclass
class CommodityFlowSolution:
    """Per-demand and aggregate edge flows with a convergence certificate.

    ``per_commodity_flow`` has shape (num demands, num edges), indexed by
    position in the demand list passed to the solver. ``relative_gap`` is
    the duality gap divided by the objective value.
    """

    demand_ids: tuple[int, ...]
    per_commodity_flow: np.ndarray
    aggregate_flow: np.ndarray
    objective: float
    relative_gap: float
    iterations: int
    converged: bool

    def flow_for_demand(self, demand_id: int) -> np.ndarray:
        return self.per_commodity_flow[self.demand_ids.index(demand_id)]


class UnreachableError(ValueError):
    """Raised when a shortest-path target cannot be reached."""


def shortest_path(
    network: RoadNetwork,
    edge_costs,
    source: int,
    target: int,
) -> list[int]:
    """Minimum-cost edge sequence from source to target.

    Ties are broken deterministically: among all shortest paths the
    lexicographically smallest edge-index sequence is returned. This is
    done by computing node-to-target distances on the reversed graph and
    then walking forward, always taking the smallest-index edge that stays
    on a shortest path.
    """
    costs = np.asarray(edge_costs, dtype=float)
    if costs.min(initial=0.0) < 0:
        raise ValueError("edge costs must be nonnegative")

    dist: dict[int, float] = {target: 0.0}
    heap: list[tuple[float, int]] = [(0.0, target)]
    settled: set[int] = set()
    while heap:
        d, node = heapq.heappop(heap)
        if node in settled:
            continue
        settled.add(node)
        for eidx in network.incoming.get(node, ()):
            tail = network.edges[eidx].tail
            nd = d + costs[eidx]
            if nd < dist.get(tail, math.inf):
                dist[tail] = nd
                heapq.heappush(heap, (nd, tail))

    if source not in dist:
        raise UnreachableError(f"node {target} is not reachable from node {source}")

    path: list[int] = []
    node = source
    max_steps = len(network.nodes)
    while node != target:
        if len(path) > max_steps:
            raise UnreachableError("shortest-path walk exceeded node count (zero-cost cycle?)")
        best = None
        for eidx in network.outgoing.get(node, ()):
            head = network.edges[eidx].head
            if head in dist and costs[eidx] + dist[head] == dist[node]:
                best = eidx
                break  # outgoing lists are in edge-index order
        if best is None:  # the edge that set dist[node] always matches exactly
            raise RuntimeError(f"inconsistent shortest-path labels at node {node}")
        path.append(best)
        node = network.edges[best].head
    return path


def objective(network: RoadNetwork, aggregate_flow) -> float:
    """Total travel time rate J(x) = sum_e t_e(x_e) * x_e (veh*s/s)."""
    x = np.asarray(aggregate_flow, dtype=float)
    if (x < 0).any():
        raise ValueError("flows must be nonnegative")
    t0, cap = _edge_arrays(network)
    latency = t0 * (1.0 + network.bpr_alpha * (x / cap) ** network.bpr_beta)
    return float(np.dot(latency, x))


def _edge_arrays(network: RoadNetwork) -> tuple[np.ndarray, np.ndarray]:
    t0 = np.array([e.free_flow_time for e in network.edges])
    cap = np.array([e.capacity for e in network.edges])
    return t0, cap


def _marginal_costs(network: RoadNetwork, x: np.ndarray, t0: np.ndarray, cap: np.ndarray) -> np.ndarray:
    a, b = network.bpr_alpha, network.bpr_beta
    return t0 * (1.0 + a * (b + 1.0) * (x / cap) ** b)


def _all_or_nothing(
    network: RoadNetwork, demands: list[Demand], costs: np.ndarray
) -> np.ndarray:
    """Route every demand entirely on its current shortest path."""
    y = np.zeros((len(demands), network.num_edges))
    for i, demand in enumerate(demands):
        for eidx in shortest_path(network, costs, demand.origin, demand.destination):
            y[i, eidx] = demand.rate
    return y


def solve_system_optimal(
    network: RoadNetwork,
    demands: list[Demand],
    config: SolverConfig = SolverConfig(),
) -> CommodityFlowSolution:
    """Frank-Wolfe with exact line search on the 1-D convex restriction.

    Starts from the all-or-nothing assignment on free-flow marginal costs.
    Stops when the relative duality gap drops below ``gap_tolerance`` or
    after ``max_iterations``; the returned solution reports which.
    """
    problems = validate(network, demands)
    if problems:
        raise ValueError(f"invalid network/demands: {problems[0].kind}: {problems[0].message}")

    t0, cap = _edge_arrays(network)
    x = _all_or_nothing(network, demands, _marginal_costs(network, np.zeros(network.num_edges), t0, cap))
    agg = x.sum(axis=0)

    def relative_gap_at(agg_flow: np.ndarray, direction: np.ndarray, costs: np.ndarray) -> float:
        gap = float(np.dot(costs, -direction))  # <grad J, x - x_aon> >= 0
        j_now = float(np.dot(t0 * (1.0 + network.bpr_alpha * (agg_flow / cap) ** network.bpr_beta), agg_flow))
        return gap / j_now if j_now > 0 else 0.0

    rel_gap = math.inf
    iterations = 0
    converged = False
    for iterations in range(1, config.max_iterations + 1):
        costs = _marginal_costs(network, agg, t0, cap)
        y = _all_or_nothing(network, demands, costs)
        direction = y.sum(axis=0) - agg

        rel_gap = relative_gap_at(agg, direction, costs)
        if rel_gap <= config.gap_tolerance:
            converged = True
            break

        step = _exact_line_search(network, agg, direction, t0, cap, config.line_search_tolerance)
        if step <= 0.0:
            break  # stalled; report the unconverged gap as-is
        x += step * (y - x)
        agg = x.sum(axis=0)

    if not converged and iterations == config.max_iterations:
        costs = _marginal_costs(network, agg, t0, cap)
        direction = _all_or_nothing(network, demands, costs).sum(axis=0) - agg
        rel_gap = relative_gap_at(agg, direction, costs)
        converged = rel_gap <= config.gap_tolerance

    np.maximum(x, 0.0, out=x)  # clip float dust from repeated convex combinations
    agg = x.sum(axis=0)
    return CommodityFlowSolution(
        demand_ids=tuple(d.id for d in demands),
        per_commodity_flow=x,
        aggregate_flow=agg,
        objective=objective(network, agg),
        relative_gap=rel_gap,
        iterations=iterations,
        converged=converged,
    )


def _exact_line_search(
    network: RoadNetwork,
    x: np.ndarray,
    direction: np.ndarray,
    t0: np.ndarray,
    cap: np.ndarray,
    tolerance: float,
) -> float:
    """Minimize J(x + step*direction) for step in [0, 1] by bisecting dJ/dstep."""

    def derivative(step: float) -> float:
        point = x + step * direction
        return float(np.dot(_marginal_costs(network, point, t0, cap), direction))

    if derivative(0.0) >= 0.0:
        return 0.0
    if derivative(1.0) <= 0.0:
        return 1.0
    lo, hi = 0.0, 1.0
    while hi - lo > tolerance:
        mid = 0.5 * (lo + hi)
        if derivative(mid) > 0.0:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


def conservation_residuals(
    network: RoadNetwork, demands: list[Demand], per_commodity_flow: np.ndarray
) -> dict[tuple[int, int], float]:
    """Per (demand id, node) imbalance: out - in, minus the rate at the origin,
    plus the rate at the destination. All values are ~0 for a feasible flow."""
    residuals: dict[tuple[int, int], float] = {}
    for i, demand in enumerate(demands):
        flows = per_commodity_flow[i]
        for node_id in network.nodes:
            balance = sum(flows[e] for e in network.outgoing.get(node_id, ())) - sum(
                flows[e] for e in network.incoming.get(node_id, ())
            )
            if node_id == demand.origin:
                balance -= demand.rate
            elif node_id == demand.destination:
                balance += demand.rate
            residuals[(demand.id, node_id)] = balance
    return residuals
