"""Deterministic reference physical-synthesis optimizer.

Two transformations only, applied greedily one per pass against full STA:

* gate sizing: replace a cell with the next drive strength in place,
  keeping every node id;
* buffer insertion: split an overloaded net so the most critical sink
  stays directly driven while the remaining sinks move behind a fresh
  buffer (multi-level trees emerge from repeated passes).

Each pass walks the current worst path, evaluates every legal move by
re-running STA, and commits the single move with the largest worst-delay
reduction (ties: sizing before buffering, then smallest anchor node id).
The loop stops when the target is met, no move improves the worst delay,
or the pass budget runs out.  The whole procedure is a pure function of
its inputs, so identical runs produce bit-identical graphs.
"""

from __future__ import annotations

from dataclasses import dataclass

from .celllib import CellKind, CellLibrary
from .errors import DomainError
from .netgraph import (
    ORIGIN_INSERTED,
    CircuitGraph,
    GraphCell,
    GraphNet,
    PinNode,
)
from .sta import analyze, backtrace_worst_path, flat_propagate, flatten

_NEG_INF = float("-inf")


@dataclass(frozen=True)
class SynthConfig:
    target_delay: float
    max_fanout: int = 2
    max_passes: int = 400
    buffer_kind: CellKind = CellKind("BUF", "X1")

    def __post_init__(self):
        if self.target_delay <= 0:
            raise DomainError(f"target_delay must be > 0, got {self.target_delay}")
        if self.max_fanout < 2:
            raise DomainError(f"max_fanout must be >= 2, got {self.max_fanout}")


class _WorkDesign:
    """Mutable mirror of a circuit graph the optimizer can edit and export."""

    def __init__(self, g: CircuitGraph):
        self.nodes = list(g.nodes)
        self.kind_of = {c.cell_id: c.kind for c in g.cells}
        self.cell_pins = {c.cell_id: (c.in_pins, c.out_pin) for c in g.cells}
        self.cell_order = [c.cell_id for c in g.cells]
        self.nets = [[n.net_id, n.driver, list(n.sinks)] for n in g.nets]
        self.net_of_driver = {n.driver: i for i, n in enumerate(g.nets)}
        # fresh buffer names must not collide with buffers of earlier runs
        taken = [int(c.cell_id[5:]) for c in g.cells if c.cell_id.startswith("__buf")]
        self.buf_counter = max(taken) + 1 if taken else 0
        self.meta = dict(g.meta)

    # -- lightweight graph view consumed by sta.flatten ----------------------

    @property
    def num_nodes(self) -> int:
        return len(self.nodes)

    @property
    def cells(self):
        return [
            GraphCell(cid, self.kind_of[cid], self.cell_pins[cid][0], self.cell_pins[cid][1])
            for cid in self.cell_order
        ]

    @property
    def gnets(self):
        return [GraphNet(nid, drv, tuple(sinks)) for nid, drv, sinks in self.nets]

    def input_ports(self):
        return [n.node_id for n in self.nodes if n.is_port and n.direction == "in"]

    def rev_adjacency(self):
        rev = [[] for _ in self.nodes]
        for _, drv, sinks in self.nets:
            for s in sinks:
                rev[s].append(drv)
        for cid in self.cell_order:
            ins, out = self.cell_pins[cid]
            for p in ins:
                rev[out].append(p)
        return rev

    # -- edits ---------------------------------------------------------------

    def apply_upsize(self, cid: str, new_kind: CellKind):
        old = self.kind_of[cid]
        self.kind_of[cid] = new_kind
        return old

    def revert_upsize(self, cid: str, old_kind: CellKind):
        self.kind_of[cid] = old_kind

    def apply_buffer(self, net_index: int, critical_sink: int, buffer_kind: CellKind):
        """Split the net: critical sink stays direct, others go behind a buffer."""
        net_id, driver, sinks = self.nets[net_index]
        bid = f"__buf{self.buf_counter}"
        in_pin = len(self.nodes)
        out_pin = in_pin + 1
        self.nodes.append(PinNode(in_pin, bid, "in", buffer_kind, ORIGIN_INSERTED))
        self.nodes.append(PinNode(out_pin, bid, "out", buffer_kind, ORIGIN_INSERTED))
        self.kind_of[bid] = buffer_kind
        self.cell_pins[bid] = ((in_pin,), out_pin)
        self.cell_order.append(bid)
        shielded = [s for s in sinks if s != critical_sink]
        self.nets[net_index][2] = [critical_sink, in_pin]
        new_net = [f"{net_id}__b{self.buf_counter}", out_pin, shielded]
        self.nets.append(new_net)
        self.net_of_driver[out_pin] = len(self.nets) - 1
        self.buf_counter += 1
        return (net_index, sinks)

    def revert_buffer(self, undo):
        net_index, old_sinks = undo
        self.buf_counter -= 1
        bid = f"__buf{self.buf_counter}"
        _, out_pin = self.cell_pins[bid]
        del self.net_of_driver[out_pin]
        self.nets.pop()
        self.nets[net_index][2] = old_sinks
        self.cell_order.pop()
        del self.cell_pins[bid]
        del self.kind_of[bid]
        self.nodes.pop()
        self.nodes.pop()

    # -- export ---------------------------------------------------------------

    def to_graph(self, meta: dict) -> CircuitGraph:
        nodes = []
        for n in self.nodes:
            if n.is_port or self.kind_of[n.owner] == n.kind:
                nodes.append(n)
            else:
                nodes.append(PinNode(n.node_id, n.owner, n.direction, self.kind_of[n.owner], n.origin))
        cells = tuple(
            GraphCell(cid, self.kind_of[cid], self.cell_pins[cid][0], self.cell_pins[cid][1])
            for cid in self.cell_order
        )
        gnets = tuple(GraphNet(nid, drv, tuple(sinks)) for nid, drv, sinks in self.nets)
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
        return CircuitGraph(
            nodes=tuple(nodes),
            nets=gnets,
            cells=cells,
            fwd=tuple(tuple(x) for x in fwd),
            rev=tuple(tuple(x) for x in rev),
            meta=meta,
        )


class _LightGraph:
    """Duck-typed stand-in for CircuitGraph that sta.flatten can consume."""

    __slots__ = ("nodes", "cells", "nets", "num_nodes", "_pi")

    def __init__(self, w: _WorkDesign):
        self.nodes = w.nodes
        self.cells = w.cells
        self.nets = w.gnets
        self.num_nodes = len(w.nodes)
        self._pi = w.input_ports()

    def input_ports(self):
        return self._pi


def _worst(fd, lib) -> float:
    arr, _, _ = flat_propagate(fd, lib)
    return max(arr[po] for po, _ in fd.po_ports)


def synthesize(g: CircuitGraph, lib: CellLibrary, cfg: SynthConfig) -> CircuitGraph:
    """Greedy timing-driven sizing/buffering toward cfg.target_delay.

    Failing to reach the target is a normal outcome; the result header
    records the realized target and whether it was met.  Node ids of the
    input survive unchanged; inserted buffer pins get fresh ids.
    """
    lib.spec(cfg.buffer_kind)
    w = _WorkDesign(g)
    passes = 0
    worst = None

    while passes < cfg.max_passes:
        fd = flatten(_LightGraph(w), lib)
        pos_of = {cid: i for i, cid in enumerate(fd.cell_ids)}
        arr, _, _ = flat_propagate(fd, lib)
        worst = _NEG_INF
        critical = -1
        for po, _ in fd.po_ports:
            if arr[po] > worst:
                worst = arr[po]
                critical = po
        if worst <= cfg.target_delay:
            break
        path = backtrace_worst_path(w.rev_adjacency(), arr, critical)

        candidates = []  # (reduction, kind_rank, anchor_node, payload)
        for i, v in enumerate(path):
            node = w.nodes[v]
            if node.is_port or node.direction != "out":
                continue
            cid = node.owner
            up = lib.upsized(w.kind_of[cid])
            if up is not None:
                p = pos_of[cid]
                old = fd.kinds[p]
                fd.kinds[p] = up
                reduction = worst - _worst(fd, lib)
                fd.kinds[p] = old
                if reduction > 0:
                    candidates.append((reduction, 0, v, ("upsize", cid, up)))
            net_index = w.net_of_driver.get(v)
            if net_index is not None and len(w.nets[net_index][2]) > cfg.max_fanout:
                critical_sink = path[i + 1]
                undo = w.apply_buffer(net_index, critical_sink, cfg.buffer_kind)
                fd2 = flatten(_LightGraph(w), lib)
                reduction = worst - _worst(fd2, lib)
                w.revert_buffer(undo)
                if reduction > 0:
                    candidates.append((reduction, 1, v, ("buffer", net_index, critical_sink)))

        if not candidates:
            break
        candidates.sort(key=lambda c: (-c[0], c[1], c[2]))
        _, _, _, move = candidates[0]
        if move[0] == "upsize":
            w.apply_upsize(move[1], move[2])
        else:
            w.apply_buffer(move[1], move[2], cfg.buffer_kind)
        passes += 1

    if worst is None:  # max_passes == 0: still report honest status
        fd = flatten(_LightGraph(w), lib)
        worst = _worst(fd, lib)

    meta = dict(g.meta)
    meta.update(
        role="post",
        target=repr(cfg.target_delay),
        met=("yes" if worst <= cfg.target_delay else "no"),
        passes=str(passes),
        realized_delay=repr(worst),
    )
    return w.to_graph(meta)


def aggressive_target(g: CircuitGraph, lib: CellLibrary, alpha: float = 0.6) -> float:
    """Delay target as a fraction of the unoptimized worst delay."""
    if alpha <= 0:
        raise DomainError(f"alpha must be > 0, got {alpha}")
    return alpha * analyze(g, lib).worst_delay
