"""Shared fixtures and independent oracles used across the test suite.

The brute-force timing oracle here must stay independent of the package's
STA implementation: it recomputes loads, slews and arc delays from the
library directly and enumerates every port-to-port path explicitly.
"""

from synthcast.celllib import CellKind, CellLibrary, CellSpec, DRIVES, FUNCTIONS
from synthcast.netgraph import Cell, Net, Netlist, netlist_to_graph


def uniform_library(
    d_intrinsic=1.0,
    r_drive=0.5,
    k_slew=0.0,
    input_cap=1.0,
    area=1.0,
    s_intrinsic=0.1,
    r_slew=0.2,
    wire_cap_per_fanout=0.1,
    default_input_slew=0.1,
    default_output_load=1.0,
    flat_caps=True,
    version="test-fixture",
):
    """Hand-controlled library: same base coefficients for every function.

    Each drive step halves r_drive/r_slew and doubles area.  With flat_caps
    the input capacitance is drive-independent, so upsizing one cell cannot
    disturb its fanin cone; combined with k_slew=0 that makes single-cell
    upsizing effects exactly local.
    """
    cells = {}
    for fn in FUNCTIONS:
        for i, drv in enumerate(DRIVES):
            s = 2.0**i
            kind = CellKind(fn, drv)
            cells[kind] = CellSpec(
                kind=kind,
                area=area * s,
                input_cap=input_cap if flat_caps else input_cap * s**0.5,
                d_intrinsic=d_intrinsic,
                r_drive=r_drive / s,
                k_slew=k_slew,
                s_intrinsic=s_intrinsic,
                r_slew=r_slew / s,
            )
    return CellLibrary(
        cells=cells,
        wire_cap_per_fanout=wire_cap_per_fanout,
        default_input_slew=default_input_slew,
        default_output_load=default_output_load,
        version=version,
    )


def inv_chain_netlist(k: int) -> Netlist:
    cells = tuple(Cell(f"i{j}", CellKind("INV", "X1")) for j in range(k))
    nets = [Net("nin", None, (("i0", "A"),))]
    for j in range(k - 1):
        nets.append(Net(f"n{j}", (f"i{j}", "Y"), ((f"i{j+1}", "A"),)))
    nets.append(Net("nout", (f"i{k-1}", "Y"), ()))
    return Netlist(cells=cells, nets=tuple(nets), primary_inputs=("nin",), primary_outputs=("nout",))


def random_netlist(rng, max_cells=12, two_input_bias=0.6):
    """Small random combinational netlist with every net driven and consumed."""
    n_pi = int(rng.integers(1, 4))
    pis = tuple(f"pi{i}" for i in range(n_pi))
    avail = list(pis)
    cells = []
    sinks_of = {net: [] for net in pis}
    n_cells = int(rng.integers(1, max_cells + 1))
    for ci in range(n_cells):
        if rng.random() < two_input_bias:
            fn = str(rng.choice(["AND2", "OR2", "NAND2", "NOR2", "XOR2", "XNOR2"]))
        else:
            fn = str(rng.choice(["INV", "BUF"]))
        drv = str(rng.choice(DRIVES))
        kind = CellKind(fn, drv)
        cid = f"c{ci}"
        cells.append(Cell(cid, kind))
        for i in range(kind.num_inputs):
            src = avail[int(rng.integers(0, len(avail)))]
            sinks_of[src].append((cid, ("A", "B")[i]))
        out = f"n{ci}"
        sinks_of[out] = []
        avail.append(out)
    nets = []
    pos = []
    for net_id in list(sinks_of):
        if net_id.startswith("pi"):
            driver = None
        else:
            driver = (f"c{net_id[1:]}", "Y")
        nets.append(Net(net_id, driver, tuple(sinks_of[net_id])))
        if not sinks_of[net_id]:
            pos.append(net_id)
    return Netlist(cells=tuple(cells), nets=tuple(nets), primary_inputs=pis, primary_outputs=tuple(pos))


def brute_force_timing(g, lib):
    """Independent oracle: per-arc delays from first principles, then explicit
    enumeration of every port-to-port path.  Returns (worst_delay, paths)
    where paths maps each path tuple to its summed arc delay.
    """
    driver_of = {}
    for net in g.nets:
        for s in net.sinks:
            driver_of[s] = net.driver

    # loads per driving output pin
    load = {}
    for net in g.nets:
        cap = lib.wire_cap_per_fanout * len(net.sinks)
        for s in net.sinks:
            node = g.nodes[s]
            if node.is_port:
                cap += lib.default_output_load
            else:
                cell = next(c for c in g.cells if c.cell_id == node.owner)
                cap += lib.cells[cell.kind].input_cap
        load[net.driver] = cap

    # slews: input ports default; output pins from their own load; net edges copy
    slew = {}
    for p in g.input_ports():
        slew[p] = lib.default_input_slew

    def slew_at(v):
        if v in slew:
            return slew[v]
        node = g.nodes[v]
        if node.is_port or node.direction == "in":
            s = slew_at(driver_of[v])
        else:
            spec = lib.cells[node.kind]
            s = spec.s_intrinsic + spec.r_slew * load[v]
        slew[v] = s
        return s

    # arc weights on every edge
    weight = {}
    for net in g.nets:
        for s in net.sinks:
            weight[(net.driver, s)] = 0.0
    for c in g.cells:
        spec = lib.cells[c.kind]
        for p in c.in_pins:
            weight[(p, c.out_pin)] = (
                spec.d_intrinsic + spec.r_drive * load[c.out_pin] + spec.k_slew * slew_at(p)
            )

    fwd = g.fwd
    paths = {}
    po = set(g.output_ports())

    def dfs(v, acc, trail):
        if v in po:
            paths[tuple(trail)] = acc
            return
        for w in fwd[v]:
            trail.append(w)
            dfs(w, acc + weight[(v, w)], trail)
            trail.pop()

    for p in g.input_ports():
        dfs(p, 0.0, [p])
    worst = max(paths.values())
    return worst, paths


def random_graph(rng, max_cells=12):
    return netlist_to_graph(random_netlist(rng, max_cells=max_cells))
