"""Road network model: nodes, edges, demands and the BPR travel-time curve.

Units are seconds, meters and vehicles/second throughout. Structural
validity is established by :func:`validate`; the dataclasses themselves are
permissive holders so that malformed inputs can be reported instead of
raised at construction time.
"""

from __future__ import annotations

from dataclasses import dataclass

INTERSECTION = "intersection"
DEPOT = "depot"

BPR_ALPHA = 0.15
BPR_BETA = 4.0


@dataclass(frozen=True)
class Node:
    """A vertex of the road graph, either an intersection or a depot."""

    id: int
    kind: str
    x: float | None = None
    y: float | None = None

    @property
    def has_position(self) -> bool:
        return self.x is not None and self.y is not None


@dataclass(frozen=True)
class Edge:
    """Directed road segment with BPR parameters.

    free_flow_time in seconds, capacity in veh/s, length in meters.
    """

    tail: int
    head: int
    free_flow_time: float
    capacity: float
    length: float


@dataclass(frozen=True)
class Demand:
    """One origin-destination travel demand at a constant rate (veh/s)."""

    id: int
    origin: int
    destination: int
    rate: float


class RoadNetwork:
    """Directed road graph with adjacency indexes rebuilt from the edge list.

    Immutable after construction; safe to share between threads. The BPR
    coefficient / exponent default to the standard 0.15 / 4 form but are
    configurable per scenario.
    """

    def __init__(
        self,
        nodes: list[Node],
        edges: list[Edge],
        bpr_alpha: float = BPR_ALPHA,
        bpr_beta: float = BPR_BETA,
    ):
        self.nodes: dict[int, Node] = {n.id: n for n in nodes}
        self.edges: tuple[Edge, ...] = tuple(edges)
        self.bpr_alpha = bpr_alpha
        self.bpr_beta = bpr_beta
        out: dict[int, list[int]] = {n.id: [] for n in nodes}
        inc: dict[int, list[int]] = {n.id: [] for n in nodes}
        for idx, e in enumerate(self.edges):
            if e.tail in out:
                out[e.tail].append(idx)
            if e.head in inc:
                inc[e.head].append(idx)
        self.outgoing: dict[int, tuple[int, ...]] = {k: tuple(v) for k, v in out.items()}
        self.incoming: dict[int, tuple[int, ...]] = {k: tuple(v) for k, v in inc.items()}
        self.edge_index: dict[tuple[int, int], int] = {
            (e.tail, e.head): i for i, e in enumerate(self.edges)
        }

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    def node_position(self, node_id: int) -> tuple[float, float] | None:
        node = self.nodes.get(node_id)
        if node is None or not node.has_position:
            return None
        return (node.x, node.y)


def bpr_latency(edge: Edge, flow: float, alpha: float = BPR_ALPHA, beta: float = BPR_BETA) -> float:
    """Travel time on ``edge`` at the given flow: t0 * (1 + alpha*(x/cap)^beta)."""
    if flow < 0:
        raise ValueError(f"flow must be nonnegative, got {flow}")
    return edge.free_flow_time * (1.0 + alpha * (flow / edge.capacity) ** beta)


def marginal_cost(edge: Edge, flow: float, alpha: float = BPR_ALPHA, beta: float = BPR_BETA) -> float:
    """Derivative of the total-delay contribution x*t(x) of one edge.

    d/dx [x * t(x)] = t0 * (1 + alpha*(beta+1)*(x/cap)^beta); this is the
    edge cost used by the conditional-gradient direction subproblem, and it
    dominates the latency itself for every nonnegative flow.
    """
    if flow < 0:
        raise ValueError(f"flow must be nonnegative, got {flow}")
    return edge.free_flow_time * (1.0 + alpha * (beta + 1.0) * (flow / edge.capacity) ** beta)


@dataclass(frozen=True)
class Violation:
    """One structural problem found by :func:`validate`."""

    kind: str
    message: str


def _reachable_from(network: RoadNetwork, source: int) -> set[int]:
    seen = {source}
    stack = [source]
    while stack:
        node = stack.pop()
        for eidx in network.outgoing.get(node, ()):
            head = network.edges[eidx].head
            if head not in seen:
                seen.add(head)
                stack.append(head)
    return seen


def validate(network: RoadNetwork, demands: list[Demand]) -> list[Violation]:
    """Check structural well-formedness; returns an empty list when valid.

    Reported kinds: bad-node-kind, dangling-edge, self-loop,
    nonpositive-parameter, duplicate-edge, bad-demand-endpoint,
    degenerate-demand, nonpositive-rate, unreachable-demand.
    """
    violations: list[Violation] = []
    for node in network.nodes.values():
        if node.kind not in (INTERSECTION, DEPOT):
            violations.append(Violation("bad-node-kind", f"node {node.id} has kind {node.kind!r}"))
    seen_pairs: set[tuple[int, int]] = set()
    for idx, e in enumerate(network.edges):
        label = f"edge {idx} ({e.tail}->{e.head})"
        if e.tail not in network.nodes or e.head not in network.nodes:
            violations.append(Violation("dangling-edge", f"{label} references unknown node"))
        if e.tail == e.head:
            violations.append(Violation("self-loop", label))
        if e.free_flow_time <= 0:
            violations.append(Violation("nonpositive-parameter", f"{label} free_flow_time"))
        if e.capacity <= 0:
            violations.append(Violation("nonpositive-parameter", f"{label} capacity"))
        if e.length <= 0:
            violations.append(Violation("nonpositive-parameter", f"{label} length"))
        if (e.tail, e.head) in seen_pairs:
            violations.append(Violation("duplicate-edge", label))
        seen_pairs.add((e.tail, e.head))

    for demand in demands:
        label = f"demand {demand.id} ({demand.origin}->{demand.destination})"
        endpoint_ok = True
        for endpoint in (demand.origin, demand.destination):
            node = network.nodes.get(endpoint)
            if node is None:
                violations.append(Violation("bad-demand-endpoint", f"{label}: unknown node {endpoint}"))
                endpoint_ok = False
            elif node.kind != DEPOT:
                violations.append(Violation("bad-demand-endpoint", f"{label}: node {endpoint} is not a depot"))
        if demand.origin == demand.destination:
            violations.append(Violation("degenerate-demand", label))
            endpoint_ok = False
        if demand.rate <= 0:
            violations.append(Violation("nonpositive-rate", label))
        if endpoint_ok and demand.destination not in _reachable_from(network, demand.origin):
            violations.append(Violation("unreachable-demand", label))
    return violations
