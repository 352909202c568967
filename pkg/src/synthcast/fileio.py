"""Structured-text and binary file formats for every pipeline artifact.

Graphs serialize to a line-oriented text document (one per graph, datasets
are plain concatenations); floats are written with repr so values
round-trip bit-exactly and files diff cleanly.  Checkpoints are a text
header plus flat little-endian float64 arrays in the documented parameter
order.  All loaders reject unknown schema versions.
"""

from __future__ import annotations

import hashlib
import json

import numpy as np

from .celllib import CellKind
from .errors import CheckpointError, PipelineError, StructuralError
from .gat import ModelConfig, ModelParams, buffer_order, param_order
from .labeling import FEATURE_DIM, NormStats
from .netgraph import CircuitGraph, GraphCell, GraphNet, PinNode

GRAPH_SCHEMA = "synthcast-graph 1"
NORM_SCHEMA = "synthcast-norm 1"
CKPT_SCHEMA = b"synthcast-ckpt 1"
CURVE_SCHEMA = "synthcast-curve 1"


def _token(s: str) -> str:
    s = str(s)
    if not s or any(c.isspace() for c in s):
        raise StructuralError(f"identifier {s!r} cannot be empty or contain whitespace")
    return s


# -- graphs and datasets -------------------------------------------------------


def graph_to_text(g: CircuitGraph) -> str:
    lines = [f"begin-graph {GRAPH_SCHEMA}"]
    if g.meta:
        kv = " ".join(f"{_token(k)}={_token(v)}" for k, v in sorted(g.meta.items()))
        lines.append(f"meta {kv}")
    for n in g.nodes:
        kind = str(n.kind) if n.kind is not None else "-"
        lines.append(f"node {n.node_id} {_token(n.owner)} {n.direction} {kind} {n.origin}")
    for net in g.nets:
        sinks = " ".join(str(s) for s in net.sinks)
        lines.append(f"net {_token(net.net_id)} {net.driver} {sinks}")
    for u, v, kind in g.edges():
        lines.append(f"edge {u} {v} {kind}")
    if g.features is not None:
        for v in range(g.num_nodes):
            vals = " ".join(repr(float(x)) for x in g.features[v])
            lines.append(f"feature {v} {vals}")
    if g.labels is not None:
        for v in range(g.num_nodes):
            lines.append(f"label {v} {float(g.labels[v, 0])!r} {float(g.labels[v, 1])!r}")
    lines.append("end-graph")
    return "\n".join(lines) + "\n"


def _graph_from_lines(lines) -> CircuitGraph:
    meta = {}
    nodes = []
    nets = []
    edge_lines = []
    features = {}
    labels = {}
    for ln in lines:
        parts = ln.split()
        tag = parts[0]
        if tag == "meta":
            for kv in parts[1:]:
                k, v = kv.split("=", 1)
                meta[k] = v
        elif tag == "node":
            nid = int(parts[1])
            if nid != len(nodes):
                raise StructuralError(f"node ids must be dense and ordered, got {nid}")
            kind = None if parts[4] == "-" else CellKind(*parts[4].rsplit("_", 1))
            nodes.append(PinNode(nid, parts[2], parts[3], kind, parts[5]))
        elif tag == "net":
            nets.append(GraphNet(parts[1], int(parts[2]), tuple(int(x) for x in parts[3:])))
        elif tag == "edge":
            edge_lines.append((int(parts[1]), int(parts[2]), parts[3]))
        elif tag == "feature":
            features[int(parts[1])] = np.array([float(x) for x in parts[2:]])
        elif tag == "label":
            labels[int(parts[1])] = (float(parts[2]), float(parts[3]))
        else:
            raise StructuralError(f"unrecognized graph line {ln!r}")

    # cells are implied by pin ownership; input pins sort before the output pin
    by_owner = {}
    for n in nodes:
        if not n.is_port:
            by_owner.setdefault(n.owner, []).append(n)
    cells = []
    for owner in sorted(by_owner, key=lambda o: min(n.node_id for n in by_owner[o])):
        pins = sorted(by_owner[owner], key=lambda n: n.node_id)
        ins = tuple(n.node_id for n in pins if n.direction == "in")
        outs = [n.node_id for n in pins if n.direction == "out"]
        if len(outs) != 1 or len(ins) != pins[0].kind.num_inputs:
            raise StructuralError(f"cell {owner!r} has malformed pins")
        cells.append(GraphCell(owner, pins[0].kind, ins, outs[0]))

    fwd = [[] for _ in nodes]
    rev = [[] for _ in nodes]
    for net in nets:
        for s in net.sinks:
            fwd[net.driver].append(s)
            rev[s].append(net.driver)
    for c in cells:
        for p in c.in_pins:
            fwd[p].append(c.out_pin)
            rev[c.out_pin].append(p)
    g = CircuitGraph(
        nodes=tuple(nodes),
        nets=tuple(nets),
        cells=tuple(cells),
        fwd=tuple(tuple(x) for x in fwd),
        rev=tuple(tuple(x) for x in rev),
        meta=meta,
    )
    if edge_lines and sorted(edge_lines) != sorted(g.edges()):
        raise StructuralError("edge section disagrees with nets and cell arcs")
    if features:
        X = np.zeros((len(nodes), FEATURE_DIM))
        for v, row in features.items():
            if row.shape != (FEATURE_DIM,):
                raise StructuralError(f"feature row {v} has width {row.shape}")
            X[v] = row
        g = g.with_annotations(features=X)
    if labels:
        Y = np.zeros((len(nodes), 2))
        for v, (a, b) in labels.items():
            Y[v] = (a, b)
        g = g.with_annotations(labels=Y)
    return g


def iter_graph_texts(text: str):
    """Split a dataset file into per-graph line lists."""
    current = None
    for raw in text.splitlines():
        ln = raw.strip()
        if not ln:
            continue
        if ln.startswith("begin-graph"):
            if ln != f"begin-graph {GRAPH_SCHEMA}":
                raise StructuralError(f"unknown graph schema {ln!r}")
            current = []
        elif ln == "end-graph":
            if current is None:
                raise StructuralError("end-graph without begin-graph")
            yield current
            current = None
        elif current is not None:
            current.append(ln)
        else:
            raise StructuralError(f"content outside graph document: {ln!r}")
    if current is not None:
        raise StructuralError("unterminated graph document")


def load_dataset(path) -> list:
    with open(path) as f:
        return [_graph_from_lines(lines) for lines in iter_graph_texts(f.read())]


def save_dataset(graphs, path) -> None:
    with open(path, "w") as f:
        for g in graphs:
            f.write(graph_to_text(g))


# -- normalization stats --------------------------------------------------------


def norm_to_text(stats: NormStats) -> str:
    def row(name, arr):
        return name + " " + " ".join(repr(float(x)) for x in arr)

    lines = [
        NORM_SCHEMA,
        f"feature_dim {len(stats.f_mean)}",
        f"label_dim {len(stats.l_mean)}",
        row("fmean", stats.f_mean),
        row("fstd", stats.f_std),
        "fconst " + " ".join(str(int(x)) for x in stats.f_const),
        row("lmean", stats.l_mean),
        row("lstd", stats.l_std),
        "lconst " + " ".join(str(int(x)) for x in stats.l_const),
        f"fingerprint {stats.fingerprint()}",
    ]
    return "\n".join(lines) + "\n"


def norm_from_text(text: str) -> NormStats:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0] != NORM_SCHEMA:
        raise PipelineError(f"unknown normalization schema {lines[0] if lines else ''!r}")
    fields = {}
    for ln in lines[1:]:
        name, _, rest = ln.partition(" ")
        fields[name] = rest.split()
    stats = NormStats(
        f_mean=np.array([float(x) for x in fields["fmean"]]),
        f_std=np.array([float(x) for x in fields["fstd"]]),
        f_const=np.array([bool(int(x)) for x in fields["fconst"]]),
        l_mean=np.array([float(x) for x in fields["lmean"]]),
        l_std=np.array([float(x) for x in fields["lstd"]]),
        l_const=np.array([bool(int(x)) for x in fields["lconst"]]),
    )
    if fields.get("fingerprint", [""])[0] != stats.fingerprint():
        raise PipelineError("normalization file fingerprint does not match its content")
    return stats


def save_norm(stats: NormStats, path) -> None:
    with open(path, "w") as f:
        f.write(norm_to_text(stats))


def load_norm(path) -> NormStats:
    with open(path) as f:
        return norm_from_text(f.read())


# -- checkpoints -----------------------------------------------------------------


def save_checkpoint(mp: ModelParams, path) -> None:
    header = {
        "config": mp.cfg.to_dict(),
        "norm_fingerprint": mp.norm_fingerprint,
        "step": mp.step,
        "params": [[n, list(s)] for n, s in param_order(mp.cfg)],
        "buffers": [[n, list(s)] for n, s in buffer_order(mp.cfg)],
    }
    blobs = []
    for name, shape in param_order(mp.cfg):
        blobs.append(np.ascontiguousarray(mp.params[name], dtype="<f8").tobytes())
    for name, shape in buffer_order(mp.cfg):
        blobs.append(np.ascontiguousarray(mp.buffers[name], dtype="<f8").tobytes())
    for name, _ in param_order(mp.cfg):
        blobs.append(np.ascontiguousarray(
            mp.adam_m.get(name, np.zeros_like(mp.params[name])), dtype="<f8").tobytes())
    for name, _ in param_order(mp.cfg):
        blobs.append(np.ascontiguousarray(
            mp.adam_v.get(name, np.zeros_like(mp.params[name])), dtype="<f8").tobytes())
    with open(path, "wb") as f:
        f.write(CKPT_SCHEMA + b"\n")
        f.write(json.dumps(header, sort_keys=True).encode() + b"\n")
        for b in blobs:
            f.write(b)


def load_checkpoint(path) -> ModelParams:
    with open(path, "rb") as f:
        schema = f.readline().rstrip(b"\n")
        if schema != CKPT_SCHEMA:
            raise CheckpointError(f"unknown checkpoint schema {schema!r}")
        try:
            header = json.loads(f.readline())
        except json.JSONDecodeError as e:
            raise CheckpointError(f"malformed checkpoint header: {e}") from None
        cfg = ModelConfig(**header["config"])
        raw = f.read()

    def take(shape, offset):
        count = int(np.prod(shape)) if shape else 1
        end = offset + count * 8
        if end > len(raw):
            raise CheckpointError("checkpoint truncated")
        arr = np.frombuffer(raw[offset:end], dtype="<f8").reshape(shape).copy()
        return arr, end

    expected = [(n, tuple(s)) for n, s in param_order(cfg)]
    if [[n, list(s)] for n, s in expected] != header["params"]:
        raise CheckpointError("checkpoint parameter manifest does not match its config")
    offset = 0
    params, buffers, adam_m, adam_v = {}, {}, {}, {}
    for name, shape in expected:
        params[name], offset = take(shape, offset)
    for name, shape in buffer_order(cfg):
        buffers[name], offset = take(tuple(shape), offset)
    for name, shape in expected:
        adam_m[name], offset = take(shape, offset)
    for name, shape in expected:
        adam_v[name], offset = take(shape, offset)
    if offset != len(raw):
        raise CheckpointError(f"checkpoint has {len(raw) - offset} trailing bytes")
    return ModelParams(
        cfg=cfg, params=params, buffers=buffers, adam_m=adam_m, adam_v=adam_v,
        step=int(header["step"]), norm_fingerprint=header["norm_fingerprint"],
    )


# -- sweep curves -----------------------------------------------------------------


def curve_to_text(curve) -> str:
    lines = [CURVE_SCHEMA, "target delay area swapped"]
    for p in curve.points:
        lines.append(f"{p.target!r} {p.delay!r} {p.area!r} {p.swapped_node_count}")
    return "\n".join(lines) + "\n"


# -- manifests ---------------------------------------------------------------------


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(out_path, command: str, args: dict, inputs: list, wall_time_s: float, extra=None):
    """Sidecar record making a pipeline stage reproducible from seeds alone.

    Wall time and other non-deterministic facts live here, never in the
    artifact itself, so artifacts stay byte-identical across reruns.
    """
    from . import __version__

    manifest = {
        "command": command,
        "args": {k: str(v) for k, v in sorted(args.items())},
        "inputs": {str(p): sha256_file(p) for p in inputs},
        "package_version": __version__,
        "wall_time_s": wall_time_s,
    }
    if extra:
        manifest["extra"] = extra
    with open(str(out_path) + ".manifest.json", "w") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write("\n")
