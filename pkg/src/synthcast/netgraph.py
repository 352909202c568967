"""Gate-level netlists and their pin-level DAG representation.

Every pin of the design (and every port) becomes one graph node; edges are
either net edges (driving pin -> sunk pin) or internal arcs (cell input pin
-> output pin of the same cell).  Node ids are stable: nodes present before
optimization keep their id afterwards, inserted cells get fresh ids.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field, replace

import numpy as np

from .celllib import FUNCTION_EVAL, CellKind
from .errors import ConsistencyError, StructuralError

INPUT_PIN_NAMES = ("A", "B")
OUTPUT_PIN_NAME = "Y"

ORIGIN_ORIGINAL = "original"
ORIGIN_INSERTED = "inserted"


@dataclass(frozen=True)
class Cell:
    cell_id: str
    kind: CellKind


@dataclass(frozen=True)
class Net:
    """One net: a single driver and its sinks, as (cell_id, pin) references.

    driver is None for nets driven by a primary input port.
    """

    net_id: str
    driver: tuple | None
    sinks: tuple


@dataclass(frozen=True)
class Netlist:
    cells: tuple
    nets: tuple
    primary_inputs: tuple
    primary_outputs: tuple


@dataclass(frozen=True)
class PinNode:
    node_id: int
    owner: str        # cell_id, or port id of the form "in:<net>" / "out:<net>"
    direction: str    # "in" | "out" (pin direction; ports carry the port direction)
    kind: CellKind | None   # None for ports
    origin: str       # ORIGIN_ORIGINAL | ORIGIN_INSERTED

    @property
    def is_port(self) -> bool:
        return self.kind is None


@dataclass(frozen=True)
class GraphNet:
    net_id: str
    driver: int
    sinks: tuple  # sink node ids; a primary-output port node is the last sink


@dataclass(frozen=True)
class GraphCell:
    cell_id: str
    kind: CellKind
    in_pins: tuple
    out_pin: int


@dataclass(frozen=True)
class CircuitGraph:
    """Immutable pin-level DAG with optional feature/label annotations.

    node_id always equals the index into `nodes`.  Adjacency is stored both
    forward and reverse; edges are recoverable as net edges (from `nets`)
    plus internal arcs (from `cells`).
    """

    nodes: tuple
    nets: tuple
    cells: tuple
    fwd: tuple
    rev: tuple
    features: np.ndarray | None = None
    labels: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    @property
    def num_nodes(self) -> int:
        return len(self.nodes)

    def input_ports(self) -> list:
        return [n.node_id for n in self.nodes if n.is_port and n.direction == "in"]

    def output_ports(self) -> list:
        return [n.node_id for n in self.nodes if n.is_port and n.direction == "out"]

    def output_pins(self) -> list:
        return [c.out_pin for c in self.cells]

    def cell_of_node(self) -> dict:
        owner = {}
        for ci, c in enumerate(self.cells):
            for p in c.in_pins:
                owner[p] = ci
            owner[c.out_pin] = ci
        return owner

    def net_of_driver(self) -> dict:
        return {net.driver: ni for ni, net in enumerate(self.nets)}

    def edges(self) -> list:
        """All edges as (from, to, kind) with kind in {"net", "arc"}."""
        out = []
        for net in self.nets:
            for s in net.sinks:
                out.append((net.driver, s, "net"))
        for c in self.cells:
            for p in c.in_pins:
                out.append((p, c.out_pin, "arc"))
        return out

    def with_annotations(self, features=None, labels=None, meta=None) -> "CircuitGraph":
        return replace(
            self,
            features=self.features if features is None else features,
            labels=self.labels if labels is None else labels,
            meta=dict(self.meta) if meta is None else meta,
        )


def _pin_name(index: int, num_inputs: int) -> str:
    if index >= num_inputs:
        raise StructuralError(f"pin index {index} out of range for {num_inputs}-input cell")
    return INPUT_PIN_NAMES[index]


def validate_netlist(n: Netlist) -> None:
    cell_ids = [c.cell_id for c in n.cells]
    if len(set(cell_ids)) != len(cell_ids):
        raise StructuralError("duplicate cell ids in netlist")
    net_ids = [net.net_id for net in n.nets]
    if len(set(net_ids)) != len(net_ids):
        raise StructuralError("duplicate net ids in netlist")
    if len(set(n.primary_outputs)) != len(n.primary_outputs):
        raise StructuralError("duplicate primary output nets")
    kinds = {c.cell_id: c.kind for c in n.cells}
    nets_by_id = {net.net_id: net for net in n.nets}
    for pi in n.primary_inputs:
        if pi not in nets_by_id:
            raise StructuralError(f"primary input net {pi!r} not in netlist")
        if nets_by_id[pi].driver is not None:
            raise StructuralError(f"primary input net {pi!r} also has a cell driver")
    for po in n.primary_outputs:
        if po not in nets_by_id:
            raise StructuralError(f"primary output net {po!r} not in netlist")

    sink_seen = {}
    for net in n.nets:
        if net.driver is None and net.net_id not in n.primary_inputs:
            raise StructuralError(f"net {net.net_id!r} has no driver and is not a primary input")
        if net.driver is not None:
            cid, pin = net.driver
            if cid not in kinds:
                raise StructuralError(f"net {net.net_id!r} driven by unknown cell {cid!r}")
            if pin != OUTPUT_PIN_NAME:
                raise StructuralError(f"net {net.net_id!r} driven by non-output pin {cid}.{pin}")
        for cid, pin in net.sinks:
            if cid not in kinds:
                raise StructuralError(f"net {net.net_id!r} sinks unknown cell {cid!r}")
            if pin not in INPUT_PIN_NAMES[: kinds[cid].num_inputs]:
                raise StructuralError(f"net {net.net_id!r} sinks invalid pin {cid}.{pin}")
            if (cid, pin) in sink_seen:
                raise StructuralError(f"input pin {cid}.{pin} is a sink of two nets")
            sink_seen[(cid, pin)] = net.net_id
    driven_count = {}
    for net in n.nets:
        if net.driver is not None:
            driven_count[net.driver[0]] = driven_count.get(net.driver[0], 0) + 1
    for c in n.cells:
        for i in range(c.kind.num_inputs):
            if (c.cell_id, INPUT_PIN_NAMES[i]) not in sink_seen:
                raise StructuralError(f"input pin {c.cell_id}.{INPUT_PIN_NAMES[i]} is not driven")
        if driven_count.get(c.cell_id, 0) != 1:
            raise StructuralError(
                f"cell {c.cell_id!r} must drive exactly one net, drives {driven_count.get(c.cell_id, 0)}"
            )


def netlist_to_graph(n: Netlist) -> CircuitGraph:
    """Convert a validated netlist into its pin-level CircuitGraph."""
    validate_netlist(n)

    nodes = []
    pin_node = {}  # (cell_id, pin) -> node_id
    port_of_pi = {}
    for net_id in n.primary_inputs:
        nid = len(nodes)
        nodes.append(PinNode(nid, f"in:{net_id}", "in", None, ORIGIN_ORIGINAL))
        port_of_pi[net_id] = nid
    cells = []
    for c in n.cells:
        in_pins = []
        for i in range(c.kind.num_inputs):
            nid = len(nodes)
            nodes.append(PinNode(nid, c.cell_id, "in", c.kind, ORIGIN_ORIGINAL))
            pin_node[(c.cell_id, INPUT_PIN_NAMES[i])] = nid
            in_pins.append(nid)
        out = len(nodes)
        nodes.append(PinNode(out, c.cell_id, "out", c.kind, ORIGIN_ORIGINAL))
        pin_node[(c.cell_id, OUTPUT_PIN_NAME)] = out
        cells.append(GraphCell(c.cell_id, c.kind, tuple(in_pins), out))
    port_of_po = {}
    for net_id in n.primary_outputs:
        nid = len(nodes)
        nodes.append(PinNode(nid, f"out:{net_id}", "out", None, ORIGIN_ORIGINAL))
        port_of_po[net_id] = nid

    gnets = []
    for net in n.nets:
        driver = port_of_pi[net.net_id] if net.driver is None else pin_node[net.driver]
        sinks = [pin_node[s] for s in net.sinks]
        if net.net_id in port_of_po:
            sinks.append(port_of_po[net.net_id])
        if not sinks:
            raise StructuralError(f"net {net.net_id!r} has no sinks and is not a primary output")
        gnets.append(GraphNet(net.net_id, driver, tuple(sinks)))

    g = _finish_graph(nodes, gnets, cells, meta={"role": "pre"})
    _check_port_coverage(g)
    return g


def _finish_graph(nodes, gnets, cells, meta) -> CircuitGraph:
    fwd = [[] for _ in nodes]
    rev = [[] for _ in nodes]
    for net in gnets:
        for s in net.sinks:
            fwd[net.driver].append(s)
            rev[s].append(net.driver)
    for c in cells:
        for p in c.in_pins:
            fwd[p].append(c.out_pin)
            rev[c.out_pin].append(p)
    g = CircuitGraph(
        nodes=tuple(nodes),
        nets=tuple(gnets),
        cells=tuple(cells),
        fwd=tuple(tuple(x) for x in fwd),
        rev=tuple(tuple(x) for x in rev),
        meta=meta,
    )
    topo_order(g)  # raises on cycles
    return g


def _check_port_coverage(g: CircuitGraph) -> None:
    order = topo_order(g)
    reach_fwd = [False] * g.num_nodes
    for p in g.input_ports():
        reach_fwd[p] = True
    for v in order:
        if reach_fwd[v]:
            for w in g.fwd[v]:
                reach_fwd[w] = True
    reach_bwd = [False] * g.num_nodes
    for p in g.output_ports():
        reach_bwd[p] = True
    for v in reversed(order):
        if reach_bwd[v]:
            for u in g.rev[v]:
                reach_bwd[u] = True
    for v in range(g.num_nodes):
        if not (reach_fwd[v] and reach_bwd[v]):
            raise StructuralError(f"node {v} ({g.nodes[v].owner}) lies on no input-to-output path")


def graph_to_netlist(g: CircuitGraph) -> Netlist:
    """Inverse of netlist_to_graph (exact round-trip for graphs it produced)."""
    pin_ref = {}
    for c in g.cells:
        for i, p in enumerate(c.in_pins):
            pin_ref[p] = (c.cell_id, _pin_name(i, c.kind.num_inputs))
        pin_ref[c.out_pin] = (c.cell_id, OUTPUT_PIN_NAME)

    pis = []
    pos = []
    for node in g.nodes:
        if node.is_port:
            net_id = node.owner.split(":", 1)[1]
            if node.direction == "in":
                pis.append(net_id)
            else:
                pos.append(net_id)
    po_set = set(pos)

    nets = []
    for net in g.nets:
        drv_node = g.nodes[net.driver]
        driver = None if drv_node.is_port else pin_ref[net.driver]
        sinks = tuple(pin_ref[s] for s in net.sinks if not g.nodes[s].is_port)
        if net.net_id in po_set and not any(g.nodes[s].is_port for s in net.sinks):
            raise ConsistencyError(f"net {net.net_id!r} marked primary output but has no port sink")
        nets.append(Net(net.net_id, driver, sinks))

    cells = tuple(Cell(c.cell_id, c.kind) for c in g.cells)
    return Netlist(cells=cells, nets=tuple(nets), primary_inputs=tuple(pis), primary_outputs=tuple(pos))


def topo_order(g: CircuitGraph) -> list:
    """Deterministic topological order; ties broken by ascending node_id."""
    indeg = [len(g.rev[v]) for v in range(g.num_nodes)]
    ready = [v for v in range(g.num_nodes) if indeg[v] == 0]
    heapq.heapify(ready)
    order = []
    while ready:
        v = heapq.heappop(ready)
        order.append(v)
        for w in g.fwd[v]:
            indeg[w] -= 1
            if indeg[w] == 0:
                heapq.heappush(ready, w)
    if len(order) != g.num_nodes:
        placed = set(order)
        rem = next(v for v in range(g.num_nodes) if v not in placed)
        seen = {}
        v = rem
        while v not in seen:
            seen[v] = True
            v = next(u for u in g.rev[v] if u not in placed)
        w = next(x for x in g.fwd[v] if x not in placed and x in seen)
        raise StructuralError(f"graph has a cycle: back-edge {v} -> {w}")
    return order


def map_counterparts(pre: CircuitGraph, post: CircuitGraph):
    """Original-node identity map plus the set of nodes inserted by synthesis."""
    pre_ids = set(range(pre.num_nodes))
    mapping = {}
    inserted = set()
    for node in post.nodes:
        if node.origin == ORIGIN_ORIGINAL:
            if node.node_id not in pre_ids:
                raise ConsistencyError(f"original post node {node.node_id} missing from pre graph")
            mapping[node.node_id] = node.node_id
        else:
            inserted.add(node.node_id)
    if set(mapping) != pre_ids:
        missing = sorted(pre_ids - set(mapping))
        raise ConsistencyError(f"pre nodes {missing[:5]} have no post counterpart")
    return mapping, frozenset(inserted)


def simulate(n: Netlist, pi_values: dict) -> dict:
    """Evaluate the boolean function of the netlist for one input assignment.

    pi_values maps primary-input net ids to 0/1; the result maps every net
    id to its value.
    """
    if set(pi_values) != set(n.primary_inputs):
        raise ConsistencyError("pi_values must assign exactly the primary inputs")
    values = dict(pi_values)
    sink_net = {}
    for net in n.nets:
        for ref in net.sinks:
            sink_net[ref] = net.net_id
    out_net = {net.driver[0]: net.net_id for net in n.nets if net.driver is not None}
    pending = list(n.cells)
    while pending:
        rest = []
        for c in pending:
            ins = [sink_net[(c.cell_id, INPUT_PIN_NAMES[i])] for i in range(c.kind.num_inputs)]
            if all(i in values for i in ins):
                values[out_net[c.cell_id]] = FUNCTION_EVAL[c.kind.function](*(values[i] for i in ins))
            else:
                rest.append(c)
        if len(rest) == len(pending):
            raise StructuralError("netlist has unresolvable (cyclic) dependencies")
        pending = rest
    return values
