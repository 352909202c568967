"""Randomized parallel-prefix adder generation.

A prefix tree decides how carry ranges combine; randomizing the split
points per range (with a per-tree serial/balanced style mix) produces
adders anywhere between ripple and minimum-depth shapes, which is the
structural diversity the dataset needs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .celllib import CellKind, CellLibrary
from .errors import DomainError
from .netgraph import Cell, Net, Netlist, simulate


@dataclass(frozen=True)
class PrefixNode:
    msb: int
    lsb: int
    split: int    # children are [msb : split+1] and [split : lsb]
    level: int


@dataclass(frozen=True)
class PrefixTree:
    width: int
    nodes: tuple  # PrefixNode per internal range, deterministic order

    @property
    def depth(self) -> int:
        return max((n.level for n in self.nodes), default=0)


def random_prefix_tree(width: int, seed: int) -> PrefixTree:
    """Seed-deterministic random prefix structure for the given bit width.

    Every output column i is decomposed as [i:0]; shared sub-ranges are
    built once, so the node set forms a DAG of ranges.  `style` mixes
    serial splits (ripple-like) with uniform random splits per tree.
    """
    if width < 2:
        raise DomainError(f"adder width must be >= 2, got {width}")
    rng = np.random.Generator(np.random.PCG64((seed, width)))
    style = float(rng.random())

    memo = {}

    def build(msb: int, lsb: int) -> int:
        """Returns the level of range [msb:lsb]; records internal nodes."""
        if msb == lsb:
            return 0
        if (msb, lsb) in memo:
            return memo[(msb, lsb)].level
        if msb - lsb == 1:
            split = lsb
        elif rng.random() < style:
            split = msb - 1
        else:
            split = int(rng.integers(lsb, msb))
        hi = build(msb, split + 1)
        lo = build(split, lsb)
        level = max(hi, lo) + 1
        memo[(msb, lsb)] = PrefixNode(msb, lsb, split, level)
        return level

    for i in range(1, width):
        build(i, 0)

    nodes = tuple(memo[key] for key in sorted(memo, key=lambda k: (k[0] - k[1], k[0])))
    return PrefixTree(width=width, nodes=nodes)


def ripple_tree(width: int) -> PrefixTree:
    """The serial extreme: width-1 nodes, depth width-1."""
    if width < 2:
        raise DomainError(f"adder width must be >= 2, got {width}")
    nodes = tuple(PrefixNode(i, 0, i - 1, i) for i in range(1, width))
    return PrefixTree(width=width, nodes=nodes)


def tree_to_netlist(t: PrefixTree, lib: CellLibrary) -> Netlist:
    """Map a prefix tree to AND2/OR2/XOR2 cells, all at drive X1.

    Cell count is 2*width (generate/propagate) + 3*#nodes (one AND/OR pair
    for the carry part, one AND for the propagate part) + width sum XORs,
    minus boundary savings: bit 0's sum is just p0 (carry-in is constant
    0, no extra cell), and a node's propagate AND is dropped when no
    parent consumes it (ranges reaching down to bit 0 that never appear
    as a child).
    """
    w = t.width
    and2 = CellKind("AND2", "X1")
    or2 = CellKind("OR2", "X1")
    xor2 = CellKind("XOR2", "X1")
    lib.spec(and2), lib.spec(or2), lib.spec(xor2)

    # Which internal ranges must emit their propagate cell: the carry
    # composition always consumes the hi child's P, while the lo child's P
    # is consumed only if this node's own P cell exists, so the need
    # propagates from parents (largest span) downwards.
    p_used = set()
    for n in sorted(t.nodes, key=lambda n: -(n.msb - n.lsb)):
        p_used.add((n.msb, n.split + 1))
        if (n.msb, n.lsb) in p_used:
            p_used.add((n.split, n.lsb))

    cells = []
    sinks = {}      # net -> list of (cell, pin)
    drivers = {}    # net -> (cell, "Y") | None
    net_order = []

    def declare(net, driver):
        drivers[net] = driver
        sinks[net] = []
        net_order.append(net)

    def connect(net, cell, pin):
        sinks[net].append((cell, pin))

    def add_cell(cid, kind, a, b, out):
        cells.append(Cell(cid, kind))
        connect(a, cid, "A")
        connect(b, cid, "B")
        declare(out, (cid, "Y"))

    for i in range(w):
        declare(f"a{i}", None)
        declare(f"b{i}", None)

    g_net = {}
    p_net = {}
    for i in range(w):
        g_net[(i, i)] = f"g{i}"
        p_net[(i, i)] = f"p{i}"
        add_cell(f"pre_g{i}", and2, f"a{i}", f"b{i}", f"g{i}")
        add_cell(f"pre_p{i}", xor2, f"a{i}", f"b{i}", f"p{i}")

    # t.nodes is ordered by span, so children always precede parents
    for n in t.nodes:
        hi = (n.msb, n.split + 1)
        lo = (n.split, n.lsb)
        tag = f"{n.msb}_{n.lsb}"
        # G = G_hi OR (P_hi AND G_lo)
        add_cell(f"pf{tag}_ag", and2, p_net[hi], g_net[lo], f"G{tag}_t")
        add_cell(f"pf{tag}_or", or2, g_net[hi], f"G{tag}_t", f"G{tag}")
        g_net[(n.msb, n.lsb)] = f"G{tag}"
        if (n.msb, n.lsb) in p_used:
            add_cell(f"pf{tag}_pp", and2, p_net[hi], p_net[lo], f"P{tag}")
            p_net[(n.msb, n.lsb)] = f"P{tag}"

    # sums: s0 = p0 (carry-in is 0); s_i = p_i XOR carry_i, carry_i = G[i-1:0]
    outputs = [p_net[(0, 0)]]
    for i in range(1, w):
        add_cell(f"sum{i}", xor2, p_net[(i, i)], g_net[(i - 1, 0)], f"s{i}")
        outputs.append(f"s{i}")
    outputs.append(g_net[(w - 1, 0)])      # carry-out completes the integer sum

    nets = tuple(Net(net, drivers[net], tuple(sinks[net])) for net in net_order)
    pis = tuple(x for i in range(w) for x in (f"a{i}", f"b{i}"))
    return Netlist(cells=tuple(cells), nets=nets, primary_inputs=pis, primary_outputs=tuple(outputs))


def adder_value(n: Netlist, width: int, a: int, b: int) -> int:
    """Simulate the adder netlist and read back the integer it computed."""
    pi = {}
    for i in range(width):
        pi[f"a{i}"] = (a >> i) & 1
        pi[f"b{i}"] = (b >> i) & 1
    values = simulate(n, pi)
    total = 0
    for i, net in enumerate(n.primary_outputs):
        total |= values[net] << i
    return total


def random_adder_netlist(width: int, seed: int, lib: CellLibrary) -> Netlist:
    return tree_to_netlist(random_prefix_tree(width, seed), lib)
