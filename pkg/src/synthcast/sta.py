"""Static timing analysis over pin-level circuit graphs.

Timing model: net edges are zero-delay, all delay lives on cell arcs
(input pin -> output pin).  Input ports start at arrival 0 with the
library default slew; an output pin's arrival is the max over its arcs of
input arrival + arc delay; slews depend only on the driven load, so arc
delays are fixed per graph and arrival times equal longest-path distances.

A node's stage delay is its arrival minus the latest predecessor arrival.
Stage delays telescope exactly along max-arrival chains, which is what
path ranking, labeling and metric reconstruction are all built on.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass

import numpy as np

from .celllib import CellLibrary
from .errors import DomainError
from .netgraph import CircuitGraph

_NEG_INF = float("-inf")


@dataclass
class FlatDesign:
    """Loop-friendly view of a circuit: plain lists, cells in topo order.

    `kinds` is the one piece the optimizer mutates in place to evaluate
    gate-sizing candidates without rebuilding the structure.
    """

    n_nodes: int
    pi_ports: list
    po_ports: list          # (port_node, driver_node)
    cell_in: list           # per cell: tuple of input pin nodes
    cell_in_driver: list    # per cell: tuple of nodes driving those pins
    cell_out: list          # per cell: output pin node
    kinds: list             # per cell: CellKind (mutable)
    nets: list              # (driver_node, tuple of sink cell positions, n_sinks, has_po_sink)
    cell_ids: list          # per cell: cell_id, same order as the other per-cell lists


def flatten(g: CircuitGraph, lib: CellLibrary) -> FlatDesign:
    """Build the flat view; cells come out in deterministic topological order."""
    for c in g.cells:
        lib.spec(c.kind)  # fail early on kinds the library does not carry

    cell_index = {c.cell_id: i for i, c in enumerate(g.cells)}
    driver_of = {}
    for net in g.nets:
        for s in net.sinks:
            driver_of[s] = net.driver

    deps = [set() for _ in g.cells]
    users = [[] for _ in g.cells]
    for i, c in enumerate(g.cells):
        for p in c.in_pins:
            dn = g.nodes[driver_of[p]]
            if not dn.is_port:
                j = cell_index[dn.owner]
                if j != i and j not in deps[i]:
                    deps[i].add(j)
                    users[j].append(i)
    indeg = [len(d) for d in deps]
    ready = [i for i in range(len(g.cells)) if indeg[i] == 0]
    heapq.heapify(ready)
    order = []
    while ready:
        i = heapq.heappop(ready)
        order.append(i)
        for j in users[i]:
            indeg[j] -= 1
            if indeg[j] == 0:
                heapq.heappush(ready, j)
    pos = {ci: p for p, ci in enumerate(order)}

    po_ports = []
    nets = []
    for net in g.nets:
        sink_cells = []
        has_po = False
        for s in net.sinks:
            node = g.nodes[s]
            if node.is_port:
                has_po = True
                po_ports.append((s, net.driver))
            else:
                sink_cells.append(pos[cell_index[node.owner]])
        nets.append((net.driver, tuple(sink_cells), len(net.sinks), has_po))
    po_ports.sort()

    return FlatDesign(
        n_nodes=g.num_nodes,
        pi_ports=g.input_ports(),
        po_ports=po_ports,
        cell_in=[g.cells[i].in_pins for i in order],
        cell_in_driver=[tuple(driver_of[p] for p in g.cells[i].in_pins) for i in order],
        cell_out=[g.cells[i].out_pin for i in order],
        kinds=[g.cells[i].kind for i in order],
        nets=nets,
        cell_ids=[g.cells[i].cell_id for i in order],
    )


def flat_propagate(fd: FlatDesign, lib: CellLibrary):
    """Core arrival/slew/load propagation.  Returns (arr, slw, load) lists."""
    specs = [lib.cells[k] for k in fd.kinds]
    wire = lib.wire_cap_per_fanout
    po_load = lib.default_output_load

    load = [0.0] * fd.n_nodes
    for driver, sink_cells, n_sinks, has_po in fd.nets:
        cap = wire * n_sinks + (po_load if has_po else 0.0)
        for ci in sink_cells:
            cap += specs[ci].input_cap
        load[driver] = cap

    arr = [0.0] * fd.n_nodes
    slw = [0.0] * fd.n_nodes
    for p in fd.pi_ports:
        slw[p] = lib.default_input_slew
    cell_in = fd.cell_in
    cell_in_driver = fd.cell_in_driver
    cell_out = fd.cell_out
    for ci in range(len(cell_out)):
        spec = specs[ci]
        out = cell_out[ci]
        l = load[out]
        base = spec.d_intrinsic + spec.r_drive * l
        ks = spec.k_slew
        best = _NEG_INF
        for ip, drv in zip(cell_in[ci], cell_in_driver[ci]):
            a = arr[drv]
            s = slw[drv]
            arr[ip] = a
            slw[ip] = s
            t = a + base + ks * s
            if t > best:
                best = t
        arr[out] = best
        slw[out] = spec.s_intrinsic + spec.r_slew * l
    for po, drv in fd.po_ports:
        arr[po] = arr[drv]
        slw[po] = slw[drv]
    return arr, slw, load


def flat_worst_delay(fd: FlatDesign, lib: CellLibrary) -> float:
    arr, _, _ = flat_propagate(fd, lib)
    return max(arr[po] for po, _ in fd.po_ports)


@dataclass
class TimingReport:
    arrival: np.ndarray       # per node
    slew: np.ndarray          # per node
    load: dict                # output pin node -> driven capacitance
    worst_delay: float
    worst_path: tuple
    total_area: float


def analyze(g: CircuitGraph, lib: CellLibrary) -> TimingReport:
    """Full STA of one graph: arrivals, slews, loads, worst path, total area."""
    fd = flatten(g, lib)
    arr, slw, load = flat_propagate(fd, lib)

    worst = _NEG_INF
    critical = -1
    for po, _ in fd.po_ports:
        if arr[po] > worst:
            worst = arr[po]
            critical = po
    path = backtrace_worst_path(g.rev, arr, critical)
    total_area = sum(lib.cells[c.kind].area for c in g.cells)
    load_map = {c.out_pin: load[c.out_pin] for c in g.cells}
    return TimingReport(
        arrival=np.array(arr),
        slew=np.array(slw),
        load=load_map,
        worst_delay=worst,
        worst_path=path,
        total_area=total_area,
    )


def backtrace_worst_path(rev, arr, endpoint: int) -> tuple:
    """Walk max-arrival predecessors back from the endpoint (ties: smallest id)."""
    path = [endpoint]
    v = endpoint
    while rev[v]:
        best = _NEG_INF
        pick = None
        for u in rev[v]:
            if arr[u] > best or (arr[u] == best and (pick is None or u < pick)):
                best = arr[u]
                pick = u
        path.append(pick)
        v = pick
    path.reverse()
    return tuple(path)


def stage_delay(report: TimingReport, g: CircuitGraph, v: int) -> float:
    """Arrival minus the latest predecessor arrival; 0 for primary-input ports."""
    preds = g.rev[v]
    if not preds:
        return 0.0
    arr = report.arrival
    return float(arr[v] - max(arr[u] for u in preds))


def stage_delays(report: TimingReport, g: CircuitGraph) -> np.ndarray:
    arr = report.arrival
    out = np.zeros(g.num_nodes)
    for v in range(g.num_nodes):
        preds = g.rev[v]
        if preds:
            out[v] = arr[v] - max(arr[u] for u in preds)
    return out


def iter_worst_paths(g: CircuitGraph, stages, arrivals):
    """Yield port-to-port paths as (node tuple, delay), worst first.

    Path delay is the sum of per-node stage contributions, so the first
    yielded path carries exactly the design's worst delay.  Equal-delay
    paths come out ordered by their node-id sequence read from the
    endpoint backwards, which matches the worst-path backtrace rule.

    Works backwards from ports with best-first search: a partial suffix's
    priority is its stage sum plus the best achievable prefix (the max
    predecessor arrival), an exact and attainable bound, so completed
    paths pop in true non-increasing delay order.  Completions tied at
    one delay are buffered and sorted before being emitted.
    """
    rev = g.rev
    maxpred = [max((arrivals[u] for u in rev[v]), default=0.0) for v in range(g.num_nodes)]

    # heap entries: (-priority, tiebreak counter, node, parent entry, stage sum of suffix)
    heap = []
    counter = 0
    for po in g.output_ports():
        heap.append((-(maxpred[po] + stages[po]), counter, po, None, stages[po]))
        counter += 1
    heapq.heapify(heap)

    group = []           # completions sharing one delay value
    group_delay = None

    def flush():
        group.sort(key=lambda pd: tuple(reversed(pd[0])))
        yield from group
        group.clear()

    while heap:
        entry = heapq.heappop(heap)
        negp, _, v, parent, sum_suffix = entry
        if group and -negp < group_delay:
            yield from flush()
            group_delay = None
        if not rev[v]:
            # reached an input port: parent chain reads off the forward path
            path = [v]
            par = parent
            while par is not None:
                path.append(par[2])
                par = par[3]
            group.append((tuple(path), -negp))
            if group_delay is None:
                group_delay = -negp
            continue
        for u in rev[v]:
            ns = sum_suffix + stages[u]
            prio = ns + (maxpred[u] if rev[u] else 0.0)
            counter += 1
            heapq.heappush(heap, (-prio, counter, u, entry, ns))
    yield from flush()


def enumerate_paths(g: CircuitGraph, report: TimingReport, k: int):
    """The k worst port-to-port paths by stage-delay sum, descending."""
    if k < 1:
        raise DomainError(f"k must be >= 1, got {k}")
    stages = stage_delays(report, g)
    out = []
    for path, delay in iter_worst_paths(g, stages, report.arrival):
        out.append((path, delay))
        if len(out) >= k:
            break
    return out


def report_to_text(report: TimingReport, g: CircuitGraph) -> str:
    """Structured-text export of a timing report (CLI `report` command)."""
    lines = ["synthcast-report 1"]
    lines.append(f"worst_delay {report.worst_delay!r}")
    lines.append(f"total_area {report.total_area!r}")
    lines.append("worst_path " + " ".join(str(v) for v in report.worst_path))
    for v in range(g.num_nodes):
        extra = f" load={report.load[v]!r}" if v in report.load else ""
        lines.append(f"node {v} arrival={report.arrival[v]!r} slew={report.slew[v]!r}{extra}")
    return "\n".join(lines) + "\n"
